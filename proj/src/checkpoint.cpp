#include "aigan/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "aigan/errors.hpp"

namespace aigan {
namespace {

void put_u16(std::string& buf, std::uint16_t v) {
    buf.push_back(static_cast<char>(v & 0xff));
    buf.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Reader {
    const unsigned char* p;
    std::size_t left;
    std::string what;

    void need(std::size_t n, const char* field) {
        if (left < n)
            throw IoError("truncated checkpoint " + what + " (while reading " + field + ")");
    }
    std::uint8_t u8(const char* field) {
        need(1, field);
        --left;
        return *p++;
    }
    std::uint16_t u16(const char* field) {
        need(2, field);
        std::uint16_t v = static_cast<std::uint16_t>(p[0]) |
                          (static_cast<std::uint16_t>(p[1]) << 8);
        p += 2;
        left -= 2;
        return v;
    }
    std::uint32_t u32(const char* field) {
        need(4, field);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
        p += 4;
        left -= 4;
        return v;
    }
};

} // namespace

void save_tensors(const std::string& path,
                  const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
    std::string buf;
    buf += "AIGN";
    put_u32(buf, kCheckpointVersion);
    put_u32(buf, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        if (name.size() > 0xffff) throw IoError("tensor name too long: " + name);
        put_u16(buf, static_cast<std::uint16_t>(name.size()));
        buf += name;
        buf.push_back(static_cast<char>(t->rank()));
        for (int d = 0; d < t->rank(); ++d)
            put_u32(buf, static_cast<std::uint32_t>(t->dim(d)));
        buf.push_back(0); // dtype f32
        const std::size_t bytes = static_cast<std::size_t>(t->numel()) * sizeof(float);
        const std::size_t off = buf.size();
        buf.resize(off + bytes);
        std::memcpy(buf.data() + off, t->data(), bytes);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("write failed for '" + path + "'");
}

std::vector<std::pair<std::string, Tensor>> load_tensors(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint '" + path + "'");
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    Reader r{reinterpret_cast<const unsigned char*>(buf.data()), buf.size(), "'" + path + "'"};
    r.need(4, "magic");
    if (std::memcmp(r.p, "AIGN", 4) != 0)
        throw IoError("corrupt checkpoint header in '" + path + "': bad magic");
    r.p += 4;
    r.left -= 4;
    const std::uint32_t version = r.u32("version");
    if (version != kCheckpointVersion)
        throw IoError("checkpoint version mismatch in '" + path + "': file has " +
                      std::to_string(version) + ", expected " +
                      std::to_string(kCheckpointVersion));
    const std::uint32_t count = r.u32("tensor count");

    std::vector<std::pair<std::string, Tensor>> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t name_len = r.u16("name length");
        r.need(name_len, "name");
        std::string name(reinterpret_cast<const char*>(r.p), name_len);
        r.p += name_len;
        r.left -= name_len;
        const std::uint8_t rank = r.u8("rank");
        std::vector<int> shape;
        std::int64_t numel = 1;
        for (int d = 0; d < rank; ++d) {
            const std::uint32_t dim = r.u32("dim");
            shape.push_back(static_cast<int>(dim));
            numel *= dim;
        }
        const std::uint8_t dtype = r.u8("dtype");
        if (dtype != 0)
            throw IoError("unsupported dtype tag " + std::to_string(dtype) + " in '" + path +
                          "'");
        const std::size_t bytes = static_cast<std::size_t>(numel) * sizeof(float);
        r.need(bytes, "payload");
        Tensor t(shape);
        std::memcpy(t.data(), r.p, bytes);
        r.p += bytes;
        r.left -= bytes;
        out.emplace_back(std::move(name), std::move(t));
    }
    return out;
}

namespace {

template <class Visitable>
void save_impl(const std::string& path, Visitable& v) {
    std::vector<std::pair<std::string, const Tensor*>> tensors;
    v.visit([&tensors](const std::string& name, Tensor& t, bool) {
        tensors.emplace_back(name, &t);
    });
    save_tensors(path, tensors);
}

template <class Visitable>
void load_impl(const std::string& path, Visitable& v) {
    auto stored = load_tensors(path);
    std::size_t applied = 0;
    std::size_t expected = 0;
    v.visit([&](const std::string& name, Tensor& t, bool) {
        ++expected;
        for (auto& [sname, st] : stored) {
            if (sname != name) continue;
            if (st.shape() != t.shape())
                throw IoError("checkpoint tensor '" + name + "' has shape " + st.shape_str() +
                              ", model expects " + t.shape_str());
            t = st;
            ++applied;
            return;
        }
        throw IoError("checkpoint '" + path + "' is missing tensor '" + name + "'");
    });
    if (stored.size() != expected)
        throw IoError("checkpoint '" + path + "' holds " + std::to_string(stored.size()) +
                      " tensors, model expects " + std::to_string(expected));
    (void)applied;
}

} // namespace

void save_model(const std::string& path, Model& m) { save_impl(path, m); }
void save_model(const std::string& path, Generator& g) { save_impl(path, g); }
void save_model(const std::string& path, Discriminator& d) { save_impl(path, d); }
void load_model(const std::string& path, Model& m) { load_impl(path, m); }
void load_model(const std::string& path, Generator& g) { load_impl(path, g); }
void load_model(const std::string& path, Discriminator& d) { load_impl(path, d); }

} // namespace aigan
