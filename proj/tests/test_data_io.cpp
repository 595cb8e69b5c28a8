#include <doctest.h>

#include <zlib.h>

#include <cstdio>
#include <fstream>

#include "aigan/dataset.hpp"
#include "support/testutil.hpp"

using namespace aigan;

namespace {

std::string tmp_file(const char* stem) {
    return std::string("/tmp/aigan_io_") + stem + "_" + std::to_string(::getpid());
}

void write_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void be32(std::string& s, std::uint32_t v) {
    s.push_back(char((v >> 24) & 0xff));
    s.push_back(char((v >> 16) & 0xff));
    s.push_back(char((v >> 8) & 0xff));
    s.push_back(char(v & 0xff));
}

std::string gzip_compress(const std::string& in) {
    z_stream zs{};
    deflateInit2(&zs, Z_BEST_SPEED, Z_DEFLATED, 15 + 16, 8, Z_DEFAULT_STRATEGY);
    std::string out(in.size() + 128, '\0');
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(in.data()));
    zs.avail_in = static_cast<uInt>(in.size());
    zs.next_out = reinterpret_cast<Bytef*>(out.data());
    zs.avail_out = static_cast<uInt>(out.size());
    deflate(&zs, Z_FINISH);
    out.resize(out.size() - zs.avail_out);
    deflateEnd(&zs);
    return out;
}

// 1-image 2x2 fixture with pixels [0, 128, 255, 64] and label 3
std::pair<std::string, std::string> crafted_idx() {
    std::string img;
    be32(img, 0x00000803);
    be32(img, 1);
    be32(img, 2);
    be32(img, 2);
    for (unsigned char p : {0, 128, 255, 64}) img.push_back(static_cast<char>(p));
    std::string lab;
    be32(lab, 0x00000801);
    be32(lab, 1);
    lab.push_back(3);
    return {img, lab};
}

} // namespace

TEST_CASE("load_idx: crafted fixture normalizes by 255") {
    auto [img, lab] = crafted_idx();
    const std::string ip = tmp_file("img.idx"), lp = tmp_file("lab.idx");
    write_bytes(ip, img);
    write_bytes(lp, lab);
    DatasetSplit d = load_idx(ip, lp);
    CHECK(d.images.shape() == std::vector<int>{1, 1, 2, 2});
    CHECK(d.images[0] == doctest::Approx(0.0f));
    CHECK(d.images[1] == doctest::Approx(0.50196f).epsilon(1e-5));
    CHECK(d.images[2] == doctest::Approx(1.0f));
    CHECK(d.images[3] == doctest::Approx(0.25098f).epsilon(1e-5));
    CHECK(d.labels == std::vector<int>{3});
    std::remove(ip.c_str());
    std::remove(lp.c_str());
}

TEST_CASE("load_idx: gzip-compressed files load transparently") {
    auto [img, lab] = crafted_idx();
    const std::string ip = tmp_file("img.idx.gz"), lp = tmp_file("lab.idx.gz");
    write_bytes(ip, gzip_compress(img));
    write_bytes(lp, gzip_compress(lab));
    DatasetSplit d = load_idx(ip, lp);
    CHECK(d.images[2] == doctest::Approx(1.0f));
    CHECK(d.labels == std::vector<int>{3});
    std::remove(ip.c_str());
    std::remove(lp.c_str());
}

TEST_CASE("load_idx: wrong magic is reported with the observed value") {
    auto [img, lab] = crafted_idx();
    img[3] = 0x07; // 0x803 -> 0x807
    const std::string ip = tmp_file("badmagic"), lp = tmp_file("badmagic_lab");
    write_bytes(ip, img);
    write_bytes(lp, lab);
    CHECK_THROWS_WITH_AS(load_idx(ip, lp), doctest::Contains("0x00000807"), IoError);
    std::remove(ip.c_str());
    std::remove(lp.c_str());
}

TEST_CASE("load_idx: image/label count mismatch and truncation") {
    auto [img, lab] = crafted_idx();
    std::string lab2 = lab;
    lab2[7] = 2; // claims 2 labels, has 1... count mismatch fires first
    const std::string ip = tmp_file("mme"), lp = tmp_file("mml");
    write_bytes(ip, img);
    write_bytes(lp, lab2);
    CHECK_THROWS_WITH_AS(load_idx(ip, lp), doctest::Contains("mismatch"), IoError);

    std::string short_img = img.substr(0, img.size() - 2);
    write_bytes(ip, short_img);
    write_bytes(lp, lab);
    CHECK_THROWS_WITH_AS(load_idx(ip, lp), doctest::Contains("truncated"), IoError);
    std::remove(ip.c_str());
    std::remove(lp.c_str());
}

TEST_CASE("save_idx/load_idx: quantized round-trip") {
    DatasetSplit d = make_blobs(4, 40, 7);
    const std::string ip = tmp_file("rt_img"), lp = tmp_file("rt_lab");
    save_idx(ip, lp, d);
    DatasetSplit back = load_idx(ip, lp);
    CHECK(back.labels == d.labels);
    REQUIRE(back.images.shape() == d.images.shape());
    for (std::int64_t i = 0; i < d.images.numel(); ++i) {
        const float q = std::round(d.images[i] * 255.0f) / 255.0f;
        CHECK(back.images[i] == doctest::Approx(q).epsilon(1e-6));
    }
    std::remove(ip.c_str());
    std::remove(lp.c_str());
}

TEST_CASE("make_blobs: determinism, balance, range, divisibility") {
    DatasetSplit a = make_blobs(4, 200, 11);
    DatasetSplit b = make_blobs(4, 200, 11);
    CHECK(testutil::bitwise_equal(a.images, b.images));
    CHECK(a.labels == b.labels);

    std::vector<int> counts(4, 0);
    for (int y : a.labels) counts[(std::size_t)y]++;
    for (int c : counts) CHECK(c == 50);

    for (std::int64_t i = 0; i < a.images.numel(); ++i) {
        CHECK(a.images[i] >= 0.0f);
        CHECK(a.images[i] <= 1.0f);
    }

    DatasetSplit c = make_blobs(4, 200, 13);
    CHECK(!testutil::bitwise_equal(a.images, c.images));

    CHECK_THROWS_AS(make_blobs(4, 201, 11), ConfigError);
    CHECK_THROWS_AS(make_blobs(17, 170, 11), ConfigError);
}

TEST_CASE("load_cifar_batches: crafted two-record batch") {
    std::string rec;
    rec.push_back(5); // label
    for (int i = 0; i < 3072; ++i) rec.push_back(static_cast<char>(i % 256));
    rec.push_back(9);
    for (int i = 0; i < 3072; ++i) rec.push_back(static_cast<char>(255));
    const std::string p = tmp_file("cifar.bin");
    write_bytes(p, rec);
    DatasetSplit d = load_cifar_batches({p});
    CHECK(d.images.shape() == std::vector<int>{2, 3, 32, 32});
    CHECK(d.labels == std::vector<int>{5, 9});
    CHECK(d.images[0] == doctest::Approx(0.0f));
    CHECK(d.images[3072 + 5] == doctest::Approx(1.0f));

    std::string bad = rec.substr(0, 100);
    write_bytes(p, bad);
    CHECK_THROWS_AS(load_cifar_batches({p}), IoError);
    std::remove(p.c_str());
}

TEST_CASE("subset and take_indices slice consistently") {
    DatasetSplit d = make_blobs(4, 40, 17);
    DatasetSplit s = subset(d, 8, 12);
    CHECK(s.size() == 12);
    CHECK(s.labels[0] == d.labels[8]);
    CHECK(s.images[0] == d.images[8 * 64]);

    DatasetSplit t = take_indices(d, {3, 39, 0});
    CHECK(t.size() == 3);
    CHECK(t.labels[1] == d.labels[39]);
    CHECK(t.images[2 * 64 + 5] == d.images[5]);

    CHECK_THROWS_AS(subset(d, 35, 10), IndexError);
}
