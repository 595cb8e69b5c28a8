#include "aigan/dataset.hpp"

#include <zlib.h>

#include <cstring>
#include <fstream>

#include "aigan/errors.hpp"

namespace aigan {
namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

bool is_gzip(const std::string& buf) {
    return buf.size() >= 2 && static_cast<unsigned char>(buf[0]) == 0x1f &&
           static_cast<unsigned char>(buf[1]) == 0x8b;
}

std::string gunzip(const std::string& in, const std::string& path) {
    z_stream zs{};
    if (inflateInit2(&zs, 15 + 16) != Z_OK) throw IoError("zlib init failed");
    std::string out;
    out.resize(in.size() * 4 + 1024);
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(in.data()));
    zs.avail_in = static_cast<uInt>(in.size());
    std::size_t written = 0;
    int rc = Z_OK;
    do {
        if (written == out.size()) out.resize(out.size() * 2);
        zs.next_out = reinterpret_cast<Bytef*>(out.data() + written);
        zs.avail_out = static_cast<uInt>(out.size() - written);
        rc = inflate(&zs, Z_NO_FLUSH);
        written = out.size() - zs.avail_out;
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            throw IoError("gzip decode failed for '" + path + "'");
        }
    } while (rc != Z_STREAM_END);
    inflateEnd(&zs);
    out.resize(written);
    return out;
}

std::string read_maybe_gzip(const std::string& path) {
    std::string buf = read_file(path);
    return is_gzip(buf) ? gunzip(buf, path) : buf;
}

std::uint32_t be32(const unsigned char* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

void put_be32(std::string& buf, std::uint32_t v) {
    buf.push_back(static_cast<char>((v >> 24) & 0xff));
    buf.push_back(static_cast<char>((v >> 16) & 0xff));
    buf.push_back(static_cast<char>((v >> 8) & 0xff));
    buf.push_back(static_cast<char>(v & 0xff));
}

constexpr std::uint32_t kImagesMagic = 0x00000803; // rank-3 u8
constexpr std::uint32_t kLabelsMagic = 0x00000801; // rank-1 u8

} // namespace

DatasetSplit load_idx(const std::string& images_path, const std::string& labels_path) {
    const std::string img = read_maybe_gzip(images_path);
    const std::string lab = read_maybe_gzip(labels_path);
    const auto* ip = reinterpret_cast<const unsigned char*>(img.data());
    const auto* lp = reinterpret_cast<const unsigned char*>(lab.data());

    if (img.size() < 16) throw IoError("truncated idx header in '" + images_path + "'");
    if (lab.size() < 8) throw IoError("truncated idx header in '" + labels_path + "'");

    const std::uint32_t im = be32(ip);
    if (im != kImagesMagic) {
        char hex[16];
        std::snprintf(hex, sizeof hex, "0x%08x", im);
        throw IoError("bad idx magic " + std::string(hex) + " in '" + images_path +
                      "' (expected 0x00000803)");
    }
    const std::uint32_t lm = be32(lp);
    if (lm != kLabelsMagic) {
        char hex[16];
        std::snprintf(hex, sizeof hex, "0x%08x", lm);
        throw IoError("bad idx magic " + std::string(hex) + " in '" + labels_path +
                      "' (expected 0x00000801)");
    }

    const int n = static_cast<int>(be32(ip + 4));
    const int h = static_cast<int>(be32(ip + 8));
    const int w = static_cast<int>(be32(ip + 12));
    const int ln = static_cast<int>(be32(lp + 4));
    if (n != ln)
        throw IoError("idx count mismatch: " + std::to_string(n) + " images vs " +
                      std::to_string(ln) + " labels");
    const std::size_t need = 16 + static_cast<std::size_t>(n) * h * w;
    if (img.size() < need)
        throw IoError("truncated idx payload in '" + images_path + "': have " +
                      std::to_string(img.size()) + " bytes, need " + std::to_string(need));
    if (lab.size() < 8 + static_cast<std::size_t>(n))
        throw IoError("truncated idx payload in '" + labels_path + "'");

    DatasetSplit out;
    out.images = Tensor({n, 1, h, w});
    out.labels.resize(static_cast<std::size_t>(n));
    const unsigned char* px = ip + 16;
    for (std::int64_t i = 0; i < out.images.numel(); ++i)
        out.images[i] = static_cast<float>(px[i]) / 255.0f;
    for (int i = 0; i < n; ++i) out.labels[(std::size_t)i] = lp[8 + i];
    out.provenance = "idx:" + images_path;
    return out;
}

void save_idx(const std::string& images_path, const std::string& labels_path,
              const DatasetSplit& data) {
    if (data.images.rank() != 4 || data.images.dim(1) != 1)
        throw IoError("save_idx expects single-channel [N,1,H,W] images");
    const int n = data.images.dim(0), h = data.images.dim(2), w = data.images.dim(3);

    std::string img;
    put_be32(img, kImagesMagic);
    put_be32(img, static_cast<std::uint32_t>(n));
    put_be32(img, static_cast<std::uint32_t>(h));
    put_be32(img, static_cast<std::uint32_t>(w));
    for (std::int64_t i = 0; i < data.images.numel(); ++i) {
        float v = data.images[i];
        v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
        img.push_back(static_cast<char>(static_cast<int>(v * 255.0f + 0.5f)));
    }
    std::string lab;
    put_be32(lab, kLabelsMagic);
    put_be32(lab, static_cast<std::uint32_t>(n));
    for (int y : data.labels) lab.push_back(static_cast<char>(y));

    std::ofstream fi(images_path, std::ios::binary | std::ios::trunc);
    std::ofstream fl(labels_path, std::ios::binary | std::ios::trunc);
    if (!fi || !fl) throw IoError("cannot write idx files");
    fi.write(img.data(), static_cast<std::streamsize>(img.size()));
    fl.write(lab.data(), static_cast<std::streamsize>(lab.size()));
}

DatasetSplit load_cifar_batches(const std::vector<std::string>& paths, int classes) {
    constexpr int kC = 3, kH = 32, kW = 32;
    constexpr std::size_t kRecord = 1 + kC * kH * kW;
    std::vector<std::string> blobs;
    std::size_t records = 0;
    for (const auto& p : paths) {
        blobs.push_back(read_maybe_gzip(p));
        if (blobs.back().size() % kRecord != 0)
            throw IoError("'" + p + "' is not a whole number of cifar records");
        records += blobs.back().size() / kRecord;
    }
    if (records == 0) throw IoError("no cifar records found");

    DatasetSplit out;
    out.images = Tensor({static_cast<int>(records), kC, kH, kW});
    out.labels.reserve(records);
    std::int64_t base = 0;
    for (const auto& blob : blobs) {
        const auto* p = reinterpret_cast<const unsigned char*>(blob.data());
        const std::size_t n = blob.size() / kRecord;
        for (std::size_t r = 0; r < n; ++r) {
            const unsigned char* rec = p + r * kRecord;
            if (rec[0] >= classes)
                throw IoError("cifar label " + std::to_string(rec[0]) + " outside [0, " +
                              std::to_string(classes) + ")");
            out.labels.push_back(rec[0]);
            for (std::size_t i = 0; i < kRecord - 1; ++i)
                out.images[base + static_cast<std::int64_t>(i)] =
                    static_cast<float>(rec[1 + i]) / 255.0f;
            base += kRecord - 1;
        }
    }
    out.provenance = "cifar";
    return out;
}

DatasetSplit make_blobs(int classes, int n, std::uint64_t seed) {
    if (classes < 2 || classes > 16)
        throw ConfigError("make_blobs: classes must be in [2, 16]");
    if (n % classes != 0)
        throw ConfigError("make_blobs: n=" + std::to_string(n) + " not divisible by " +
                          std::to_string(classes) + " classes");
    Rng rng(seed);
    std::vector<Tensor> templates;
    templates.reserve(static_cast<std::size_t>(classes));
    for (int k = 0; k < classes; ++k) {
        Tensor t({1, 8, 8});
        rng.fill_uniform(t, 0.0f, 1.0f);
        templates.push_back(std::move(t));
    }

    DatasetSplit out;
    out.images = Tensor({n, 1, 8, 8});
    out.labels.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const int k = i % classes;
        out.labels[(std::size_t)i] = k;
        float* dst = out.images.data() + static_cast<std::int64_t>(i) * 64;
        const Tensor& tpl = templates[(std::size_t)k];
        for (int j = 0; j < 64; ++j) {
            float v = tpl[j] + rng.uniform(-0.1f, 0.1f);
            dst[j] = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
        }
    }
    out.provenance = "blobs:" + std::to_string(seed);
    return out;
}

Tensor slice_images(const Tensor& images, int start, int count) {
    if (images.rank() != 4) throw ShapeError("slice_images: need [N,C,H,W]");
    if (start < 0 || count < 1 || start + count > images.dim(0))
        throw IndexError("slice [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") outside batch of " +
                         std::to_string(images.dim(0)));
    const std::int64_t stride =
        static_cast<std::int64_t>(images.dim(1)) * images.dim(2) * images.dim(3);
    Tensor out({count, images.dim(1), images.dim(2), images.dim(3)});
    std::memcpy(out.data(), images.data() + start * stride,
                sizeof(float) * static_cast<std::size_t>(count * stride));
    return out;
}

std::vector<int> slice_labels(const std::vector<int>& labels, int start, int count) {
    return std::vector<int>(labels.begin() + start, labels.begin() + start + count);
}

DatasetSplit subset(const DatasetSplit& d, int start, int count) {
    DatasetSplit out;
    out.images = slice_images(d.images, start, count);
    out.labels = slice_labels(d.labels, start, count);
    out.provenance = d.provenance;
    return out;
}

DatasetSplit take_indices(const DatasetSplit& d, const std::vector<int>& idx) {
    const std::int64_t stride =
        static_cast<std::int64_t>(d.images.dim(1)) * d.images.dim(2) * d.images.dim(3);
    DatasetSplit out;
    out.images = Tensor({static_cast<int>(idx.size()), d.images.dim(1), d.images.dim(2),
                         d.images.dim(3)});
    out.labels.resize(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        std::memcpy(out.images.data() + static_cast<std::int64_t>(i) * stride,
                    d.images.data() + static_cast<std::int64_t>(idx[i]) * stride,
                    sizeof(float) * static_cast<std::size_t>(stride));
        out.labels[i] = d.labels[(std::size_t)idx[i]];
    }
    out.provenance = d.provenance;
    return out;
}

} // namespace aigan
