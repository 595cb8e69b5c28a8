#include "aigan/evalharness.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>

#include "aigan/dataset.hpp"
#include "aigan/errors.hpp"

namespace aigan {
namespace {

using nlohmann::json;

std::vector<int> predictions(Model& model, const Tensor& x, int batch = 256) {
    const int n = x.dim(0);
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int start = 0; start < n; start += batch) {
        const int count = std::min(batch, n - start);
        auto p = argmax_rows(model.logits(slice_images(x, start, count)));
        out.insert(out.end(), p.begin(), p.end());
    }
    return out;
}

} // namespace

TargetedResult targeted_asr(Model& model, const AdvBatch& adv, const EvalOptions& opt) {
    if (adv.targets.empty()) throw ContractError("targeted_asr: batch carries no targets");
    const int k = model.classes();
    auto pred = predictions(model, adv.x_adv);
    TargetedResult res;
    res.per_class.assign(static_cast<std::size_t>(k), 0.0);
    res.counts.assign(static_cast<std::size_t>(k), 0);
    std::vector<long> hits(static_cast<std::size_t>(k), 0);
    long total_hits = 0, total = 0;
    for (std::size_t i = 0; i < adv.targets.size(); ++i) {
        const int t = adv.targets[i];
        if (!opt.include_self_targets && !adv.y.empty() && adv.y[i] == t) continue;
        res.counts[(std::size_t)t] += 1;
        ++total;
        if (pred[i] == t) {
            hits[(std::size_t)t] += 1;
            ++total_hits;
        }
    }
    for (int c = 0; c < k; ++c)
        res.per_class[(std::size_t)c] =
            res.counts[(std::size_t)c] ? double(hits[(std::size_t)c]) / res.counts[(std::size_t)c]
                                       : 0.0;
    res.average = total ? double(total_hits) / total : 0.0;
    return res;
}

double untargeted_asr(Model& model, const AdvBatch& adv) {
    if (adv.y.empty()) throw ContractError("untargeted_asr: batch carries no labels");
    auto clean_pred = predictions(model, adv.x_clean);
    auto adv_pred = predictions(model, adv.x_adv);
    long base = 0, flipped = 0;
    for (std::size_t i = 0; i < adv.y.size(); ++i) {
        if (clean_pred[i] != adv.y[i]) continue; // only originally-correct samples count
        ++base;
        if (adv_pred[i] != adv.y[i]) ++flipped;
    }
    if (base == 0)
        throw ContractError("untargeted_asr: no correctly classified samples to attack");
    return double(flipped) / base;
}

std::vector<std::vector<long>> confusion(Model& model, const AdvBatch& adv,
                                         const EvalOptions& opt) {
    if (adv.targets.empty()) throw ContractError("confusion: batch carries no targets");
    const int k = model.classes();
    auto pred = predictions(model, adv.x_adv);
    std::vector<std::vector<long>> m(static_cast<std::size_t>(k),
                                     std::vector<long>(static_cast<std::size_t>(k), 0));
    for (std::size_t i = 0; i < adv.targets.size(); ++i) {
        if (!opt.include_self_targets && !adv.y.empty() && adv.y[i] == adv.targets[i])
            continue;
        m[(std::size_t)adv.targets[i]][(std::size_t)pred[i]] += 1;
    }
    return m;
}

AuditSummary linf_audit(const AdvBatch& adv, float eps) {
    Tensor::check_same_shape(adv.x_clean, adv.x_adv, "linf_audit");
    AuditSummary s;
    for (std::int64_t i = 0; i < adv.x_adv.numel(); ++i) {
        const float d = std::fabs(adv.x_adv[i] - adv.x_clean[i]);
        if (d > s.max_linf) s.max_linf = d;
        if (d > eps + 1e-6f) ++s.linf_violations;
        if (adv.x_adv[i] < 0.0f || adv.x_adv[i] > 1.0f) ++s.range_violations;
    }
    return s;
}

TimingStats timing(const std::function<void()>& run_once, int batch_size, int repeats) {
    if (repeats < 3) throw ContractError("timing: repeats must be >= 3");
    if (batch_size < 1) throw ContractError("timing: empty batch");
    run_once(); // warm-up, excluded
    TimingStats st;
    st.repeats = repeats;
    st.min_s = 1e300;
    for (int r = 0; r < repeats; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        run_once();
        const double dt =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() /
            batch_size;
        st.mean_s += dt;
        st.min_s = std::min(st.min_s, dt);
        st.max_s = std::max(st.max_s, dt);
    }
    st.mean_s /= repeats;
    return st;
}

EvalReport evaluate(Model& model, const AdvBatch& adv, const std::string& model_id,
                    const std::string& attack_id, std::uint64_t seed,
                    const EvalOptions& opt) {
    EvalReport rep;
    rep.model_id = model_id;
    rep.attack_id = attack_id;
    rep.epsilon = adv.epsilon;
    rep.sample_count = adv.x_adv.dim(0);
    rep.seed = seed;
    if (!adv.targets.empty()) {
        TargetedResult t = targeted_asr(model, adv, opt);
        rep.per_class_asr = t.per_class;
        rep.per_class_count = t.counts;
        rep.average_asr = t.average;
        rep.confusion = confusion(model, adv, opt);
    }
    rep.audit = linf_audit(adv, adv.epsilon);
    rep.valid = rep.audit.linf_violations == 0 && rep.audit.range_violations == 0;
    return rep;
}

// ---- ppm ----

void write_ppm(const std::string& path, const Tensor& image) {
    if (image.rank() != 3 || (image.dim(0) != 1 && image.dim(0) != 3))
        throw ShapeError("write_ppm: need [1|3,H,W], got " + image.shape_str());
    const int c = image.dim(0), h = image.dim(1), w = image.dim(2);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write image '" + path + "'");
    out << (c == 1 ? "P5" : "P6") << "\n" << w << " " << h << "\n255\n";
    std::string bytes;
    bytes.reserve(static_cast<std::size_t>(c) * h * w);
    // interleave channels for P6
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int ch = 0; ch < c; ++ch) {
                float v = image[(static_cast<std::int64_t>(ch) * h + i) * w + j];
                v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
                bytes.push_back(static_cast<char>(static_cast<int>(v * 255.0f + 0.5f)));
            }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for '" + path + "'");
}

Tensor read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image '" + path + "'");
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    in >> magic >> w >> h >> maxval;
    if ((magic != "P5" && magic != "P6") || maxval != 255 || w < 1 || h < 1)
        throw IoError("'" + path + "' is not an 8-bit binary ppm/pgm");
    in.get(); // single whitespace after the header
    const int c = magic == "P5" ? 1 : 3;
    std::string bytes(static_cast<std::size_t>(c) * h * w, '\0');
    in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
        throw IoError("truncated image payload in '" + path + "'");
    Tensor img({c, h, w});
    std::size_t p = 0;
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            for (int ch = 0; ch < c; ++ch)
                img[(static_cast<std::int64_t>(ch) * h + i) * w + j] =
                    static_cast<float>(static_cast<unsigned char>(bytes[p++])) / 255.0f;
    return img;
}

void export_grid(const Tensor& images, int k, const std::string& path) {
    if (images.rank() != 4)
        throw ShapeError("export_grid: need [K*K,C,H,W], got " + images.shape_str());
    if (images.dim(0) != k * k)
        throw ContractError("export_grid: expected " + std::to_string(k * k) +
                            " tiles, got " + std::to_string(images.dim(0)));
    const int c = images.dim(1), h = images.dim(2), w = images.dim(3);
    Tensor grid({c, k * h, k * w});
    for (int row = 0; row < k; ++row)
        for (int col = 0; col < k; ++col) {
            const std::int64_t src = static_cast<std::int64_t>(row * k + col) * c * h * w;
            for (int ch = 0; ch < c; ++ch)
                for (int i = 0; i < h; ++i)
                    std::memcpy(grid.data() +
                                    (static_cast<std::int64_t>(ch) * k * h + row * h + i) *
                                        (k * w) +
                                    col * w,
                                images.data() + src + (static_cast<std::int64_t>(ch) * h + i) * w,
                                sizeof(float) * static_cast<std::size_t>(w));
        }
    write_ppm(path, grid);
}

Tensor amplify_perturbation(const Tensor& delta, float eps) {
    if (!(eps > 0.0f)) throw ContractError("amplify_perturbation: eps must be positive");
    Tensor out(delta.shape());
    const float inv = 1.0f / (2.0f * eps);
    for (std::int64_t i = 0; i < delta.numel(); ++i) out[i] = (delta[i] + eps) * inv;
    return out;
}

// ---- reports ----

void export_report_json(const EvalReport& rep, const std::string& path) {
    json j;
    j["model"] = rep.model_id;
    j["attack"] = rep.attack_id;
    j["epsilon"] = rep.epsilon;
    j["sample_count"] = rep.sample_count;
    j["seed"] = rep.seed;
    j["per_class_asr"] = rep.per_class_asr;
    j["per_class_count"] = rep.per_class_count;
    j["average_asr"] = rep.average_asr;
    j["confusion"] = rep.confusion;
    json timing = json::object();
    for (const auto& [name, st] : rep.timing)
        timing[name] = {{"mean_s", st.mean_s},
                        {"min_s", st.min_s},
                        {"max_s", st.max_s},
                        {"repeats", st.repeats}};
    j["timing"] = timing;
    j["audit"] = {{"linf_violations", rep.audit.linf_violations},
                  {"max_linf", rep.audit.max_linf},
                  {"range_violations", rep.audit.range_violations}};
    j["valid"] = rep.valid;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write report '" + path + "'");
    out << j.dump(2) << "\n";
}

EvalReport import_report_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open report '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError("report '" + path + "' is not valid json: " + e.what());
    }
    EvalReport rep;
    rep.model_id = j.at("model").get<std::string>();
    rep.attack_id = j.at("attack").get<std::string>();
    rep.epsilon = j.at("epsilon").get<float>();
    rep.sample_count = j.at("sample_count").get<int>();
    rep.seed = j.at("seed").get<std::uint64_t>();
    rep.per_class_asr = j.at("per_class_asr").get<std::vector<double>>();
    rep.per_class_count = j.at("per_class_count").get<std::vector<long>>();
    rep.average_asr = j.at("average_asr").get<double>();
    rep.confusion = j.at("confusion").get<std::vector<std::vector<long>>>();
    for (const auto& [name, st] : j.at("timing").items()) {
        TimingStats ts;
        ts.mean_s = st.at("mean_s").get<double>();
        ts.min_s = st.at("min_s").get<double>();
        ts.max_s = st.at("max_s").get<double>();
        ts.repeats = st.at("repeats").get<int>();
        rep.timing[name] = ts;
    }
    rep.audit.linf_violations = j.at("audit").at("linf_violations").get<long>();
    rep.audit.max_linf = j.at("audit").at("max_linf").get<float>();
    rep.audit.range_violations = j.at("audit").at("range_violations").get<long>();
    rep.valid = j.at("valid").get<bool>();
    return rep;
}

void export_report_csv(const EvalReport& rep, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write csv '" + path + "'");
    out << "target_class,samples,asr\n";
    for (std::size_t c = 0; c < rep.per_class_asr.size(); ++c)
        out << c << ',' << rep.per_class_count[c] << ',' << rep.per_class_asr[c] << '\n';
    long total = 0;
    for (long n : rep.per_class_count) total += n;
    out << "average," << total << ',' << rep.average_asr << '\n';
}

} // namespace aigan
