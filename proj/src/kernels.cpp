// Kernel dispatch: picks the AVX2 table when the CPU supports it, otherwise
// the scalar reference. AIGAN_KERNELS=scalar|avx2|auto overrides.

#include <cstdlib>
#include <string>

#include "aigan/errors.hpp"
#include "aigan/kernels.hpp"

namespace aigan::kern {
namespace {

const Table* g_active = nullptr;
std::string g_name;

void pick(std::string_view name) {
    if (name == "scalar") {
        g_active = &scalar_table();
        g_name = "scalar";
        return;
    }
    if (name == "avx2") {
        const Table* t = avx2_table();
        if (!t || !avx2_available())
            throw ContractError("avx2 kernels requested but not available on this cpu");
        g_active = t;
        g_name = "avx2";
        return;
    }
    if (name == "auto") {
        const Table* t = avx2_table();
        if (t && avx2_available()) {
            g_active = t;
            g_name = "avx2";
        } else {
            g_active = &scalar_table();
            g_name = "scalar";
        }
        return;
    }
    throw ConfigError("unknown kernel set '" + std::string(name) + "' (auto|scalar|avx2)");
}

void init_once() {
    if (g_active) return;
    const char* env = std::getenv("AIGAN_KERNELS");
    pick(env ? std::string_view(env) : std::string_view("auto"));
}

} // namespace

bool avx2_available() {
#if defined(__x86_64__) || defined(_M_X64) || defined(__i386__)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const Table& active() {
    init_once();
    return *g_active;
}

std::string_view active_name() {
    init_once();
    return g_name;
}

void select(std::string_view name) { pick(name); }

} // namespace aigan::kern
