#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "aigan/attacks.hpp"
#include "aigan/models.hpp"
#include "aigan/tensor.hpp"

namespace aigan {

struct TimingStats {
    double mean_s = 0, min_s = 0, max_s = 0; // per-example seconds
    int repeats = 0;
};

struct AuditSummary {
    long linf_violations = 0;
    float max_linf = 0.0f;
    long range_violations = 0;
};

struct EvalReport {
    std::string model_id;
    std::string attack_id;
    float epsilon = 0.0f;
    int sample_count = 0;
    std::uint64_t seed = 0;

    std::vector<double> per_class_asr;             // K entries
    std::vector<long> per_class_count;             // evaluated samples per target
    double average_asr = 0.0;                      // sample-weighted
    std::vector<std::vector<long>> confusion;      // [target][prediction]
    std::map<std::string, TimingStats> timing;
    AuditSummary audit;
    bool valid = false; // audit came back clean
};

struct EvalOptions {
    // Targeted ASR denominator normally excludes samples whose true label
    // already equals the target; this knob re-includes them.
    bool include_self_targets = false;
};

struct TargetedResult {
    std::vector<double> per_class; // K
    std::vector<long> counts;      // evaluated samples per class
    double average = 0.0;          // sample-weighted mean
};

// fraction of samples per target class with argmax prediction == target
TargetedResult targeted_asr(Model& model, const AdvBatch& adv,
                            const EvalOptions& opt = {});

// fraction with argmax != y among samples the model originally got right
double untargeted_asr(Model& model, const AdvBatch& adv);

// K x K counts, rows = target class, columns = prediction
std::vector<std::vector<long>> confusion(Model& model, const AdvBatch& adv,
                                         const EvalOptions& opt = {});

// (element violations beyond eps + 1e-6, max |delta|, pixels outside [0,1])
AuditSummary linf_audit(const AdvBatch& adv, float eps);

// wall-clock per-example seconds over `repeats` runs, one warm-up excluded
TimingStats timing(const std::function<void()>& run_once, int batch_size, int repeats);

// assembles the full report for one attack run against one model
EvalReport evaluate(Model& model, const AdvBatch& adv, const std::string& model_id,
                    const std::string& attack_id, std::uint64_t seed,
                    const EvalOptions& opt = {});

// ---- exports ----

// 8-bit binary PPM: P5 for 1-channel, P6 for 3-channel
void write_ppm(const std::string& path, const Tensor& image); // [C,H,W] in [0,1]
Tensor read_ppm(const std::string& path);

// K x K tile grid (rows = target class, columns = source class); images
// arrive row-major as [K*K, C, H, W]
void export_grid(const Tensor& images, int k, const std::string& path);

// maps [-eps, eps] linearly onto [0,1] for visibility
Tensor amplify_perturbation(const Tensor& delta, float eps);

void export_report_json(const EvalReport& rep, const std::string& path);
EvalReport import_report_json(const std::string& path);
// K class rows plus one average row, with a header
void export_report_csv(const EvalReport& rep, const std::string& path);

} // namespace aigan
