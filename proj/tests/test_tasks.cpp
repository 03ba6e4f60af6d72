#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <set>

#include "misgrad/net.hpp"
#include "misgrad/tasks.hpp"

using namespace misgrad;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("misgrad_tasks_" + std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const char* name) const { return (path / name).string(); }
};

} // namespace

TEST_CASE("gen_polynomial: determinism and shapes") {
    PolynomialTask a = gen_polynomial(6, 64, -2.0, 2.0, 0.1, 5);
    PolynomialTask b = gen_polynomial(6, 64, -2.0, 2.0, 0.1, 5);
    CHECK(a.reference_coeffs == b.reference_coeffs);
    CHECK(a.data.inputs == b.data.inputs);
    CHECK(a.data.targets == b.data.targets);

    CHECK(a.data.size() == 64);
    CHECK(a.data.input_dim() == 6);
    CHECK(a.data.target_dim() == 1);
    CHECK(a.data.manifest_line() == "poly6,64,6,vec1");

    // Normalized monomial features stay inside [-1, 1].
    for (const Vec& x : a.data.inputs)
        for (double v : x) {
            CHECK(v <= 1.0);
            CHECK(v >= -1.0);
        }

    PolynomialTask c = gen_polynomial(6, 64, -2.0, 2.0, 0.1, 6);
    CHECK(c.data.targets != a.data.targets);

    CHECK_THROWS_AS(gen_polynomial(6, 6, -2.0, 2.0, 0.0, 1), ConfigInvalid);
}

TEST_CASE("gen_polynomial: noiseless interpolation is driven to machine zero") {
    // order+1 points, no noise: the convex least-squares problem has an exact
    // interpolant, so full-batch gradient descent reaches ~zero loss.
    PolynomialTask t = gen_polynomial(3, 4, -2.0, 2.0, 0.0, 9);
    Rng rng(1);
    Network net = make_mlp(3, {}, 1, Activation::identity, 0, rng);
    const int n = t.data.size();
    for (int it = 0; it < 200000; ++it) {
        Vec grad(static_cast<std::size_t>(net.param_count()), 0.0);
        for (int i = 0; i < n; ++i) {
            SampleGrad sg = per_sample_backward(net, t.data.inputs[static_cast<std::size_t>(i)],
                                                t.data.targets[static_cast<std::size_t>(i)], LossKind::mse);
            axpy(1.0 / n, sg.param_grad, grad);
        }
        sgd_step(net, grad, 0.4);
    }
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        const Vec out = forward(net, t.data.inputs[static_cast<std::size_t>(i)]);
        const double d = out[0] - t.data.targets[static_cast<std::size_t>(i)][0];
        loss += d * d / n;
    }
    CHECK(loss < 1e-10);
}

TEST_CASE("gen_toy_classification: balance, bounds, determinism") {
    Dataset d = gen_toy_classification(301, 17);
    CHECK(d.size() == 301);
    CHECK(d.class_count == 3);
    CHECK(d.manifest_line() == "toy2d,301,2,class3");

    int counts[3] = {0, 0, 0};
    for (int l : d.labels) ++counts[l];
    const int lo = std::min({counts[0], counts[1], counts[2]});
    const int hi = std::max({counts[0], counts[1], counts[2]});
    CHECK(hi - lo <= 1);

    for (const Vec& x : d.inputs) {
        CHECK(x[0] >= 0.0);
        CHECK(x[0] <= 1.0);
        CHECK(x[1] >= 0.0);
        CHECK(x[1] <= 1.0);
    }

    Dataset e = gen_toy_classification(301, 17);
    CHECK(d.inputs == e.inputs);
    CHECK(d.labels == e.labels);
    CHECK_THROWS_AS(gen_toy_classification(2, 1), ConfigInvalid);
}

TEST_CASE("ppm: white image, round trip, malformed input") {
    TempDir tmp;

    PpmImage white;
    white.width = 2;
    white.height = 2;
    white.rgb.assign(12, 255);
    write_ppm(white, tmp.file("white.ppm"));
    Dataset d = load_image_regression(tmp.file("white.ppm"));
    CHECK(d.size() == 4);
    for (const Vec& t : d.targets) CHECK(t == Vec{1.0, 1.0, 1.0});
    for (const Vec& x : d.inputs) {
        CHECK(x[0] >= 0.0);
        CHECK(x[0] <= 1.0);
    }

    // Byte-exact round trip through the dataset at native resolution.
    Rng rng(3);
    PpmImage noisy;
    noisy.width = 8;
    noisy.height = 8;
    noisy.rgb.resize(192);
    for (auto& b : noisy.rgb) b = static_cast<std::uint8_t>(rng.below(256));
    write_ppm(noisy, tmp.file("noisy.ppm"));
    Dataset nd = load_image_regression(tmp.file("noisy.ppm"));
    PpmImage back = render_to_ppm(nd, 8, 8);
    CHECK(back.rgb == noisy.rgb);

    // Box downsampling averages 2x2 blocks.
    Dataset half = load_image_regression(tmp.file("noisy.ppm"), 4);
    CHECK(half.size() == 16);
    double expect = (noisy.rgb[0] + noisy.rgb[3] + noisy.rgb[8 * 3] + noisy.rgb[8 * 3 + 3]) / (4.0 * 255.0);
    CHECK(half.targets[0][0] == doctest::Approx(expect).epsilon(1e-12));
    CHECK_THROWS_AS(load_image_regression(tmp.file("noisy.ppm"), 3), UnsupportedFormat);

    {
        std::ofstream bad(tmp.file("bad.ppm"), std::ios::binary);
        bad << "P5\n2 2\n255\n";
    }
    CHECK_THROWS_AS(load_image_regression(tmp.file("bad.ppm")), UnsupportedFormat);
    {
        std::ofstream bad(tmp.file("trunc.ppm"), std::ios::binary);
        bad << "P6\n2 2\n255\nxx";
    }
    CHECK_THROWS_AS(load_image_regression(tmp.file("trunc.ppm")), MalformedImage);
    {
        std::ofstream bad(tmp.file("deep.ppm"), std::ios::binary);
        bad << "P6\n2 2\n65535\n";
        for (int i = 0; i < 24; ++i) bad.put('\0');
    }
    CHECK_THROWS_AS(load_image_regression(tmp.file("deep.ppm")), UnsupportedFormat);
}

TEST_CASE("idx: hand-built two-image fixture parses with expected shapes") {
    TempDir tmp;
    std::vector<std::uint8_t> pixels(2 * 28 * 28, 0);
    pixels[5] = 200;
    pixels[28 * 28 + 7] = 100;
    write_idx_images(tmp.file("img.idx"), pixels, 2, 28, 28);
    write_idx_labels(tmp.file("lab.idx"), {0, 1});

    IdxImages idx = read_idx_images(tmp.file("img.idx"));
    CHECK(idx.count == 2);
    CHECK(idx.rows == 28);
    CHECK(idx.cols == 28);

    Dataset d = load_idx_subset(tmp.file("img.idx"), tmp.file("lab.idx"), 2, 1);
    CHECK(d.size() == 2);
    CHECK(d.input_dim() == 784);
    CHECK(d.class_count == 2);
    // Pixels scaled into [0,1].
    double maxpix = 0.0;
    for (const Vec& x : d.inputs)
        for (double v : x) maxpix = std::max(maxpix, v);
    CHECK(maxpix == doctest::Approx(200.0 / 255.0));
}

TEST_CASE("idx: stratification, determinism, errors") {
    TempDir tmp;
    write_synth_idx(tmp.file("img.idx"), tmp.file("lab.idx"), 400, 77);

    Dataset d = load_idx_subset(tmp.file("img.idx"), tmp.file("lab.idx"), 103, 5);
    std::vector<int> counts(10, 0);
    for (int l : d.labels) ++counts[static_cast<std::size_t>(l)];
    const auto [lo, hi] = std::minmax_element(counts.begin(), counts.end());
    CHECK(*hi - *lo <= 1);

    Dataset again = load_idx_subset(tmp.file("img.idx"), tmp.file("lab.idx"), 103, 5);
    CHECK(d.labels == again.labels);
    CHECK(d.inputs == again.inputs);
    Dataset other = load_idx_subset(tmp.file("img.idx"), tmp.file("lab.idx"), 103, 6);
    CHECK(d.labels != other.labels);

    CHECK_THROWS_AS(load_idx_subset(tmp.file("img.idx"), tmp.file("lab.idx"), 0, 1), EmptySubset);
    CHECK_THROWS_AS(load_idx_subset(tmp.file("img.idx"), tmp.file("lab.idx"), 401, 1), ConfigInvalid);

    write_idx_labels(tmp.file("short.idx"), {0, 1, 2});
    CHECK_THROWS_AS(load_idx_subset(tmp.file("img.idx"), tmp.file("short.idx"), 2, 1),
                    LabelImageCountMismatch);

    {
        std::ofstream bad(tmp.file("badmagic.idx"), std::ios::binary);
        const char b[8] = {0, 0, 8, 9, 0, 0, 0, 0};
        bad.write(b, 8);
    }
    CHECK_THROWS_AS(read_idx_images(tmp.file("badmagic.idx")), MalformedIdx);
}

TEST_CASE("synthetic glyphs: deterministic, labeled, plausible contrast") {
    SynthIdxData a = gen_synth_glyphs(50, 9);
    SynthIdxData b = gen_synth_glyphs(50, 9);
    CHECK(a.pixels == b.pixels);
    CHECK(a.labels == b.labels);
    for (int i = 0; i < 50; ++i) CHECK(a.labels[static_cast<std::size_t>(i)] == i % 10);

    // Every glyph leaves visibly bright pixels somewhere.
    for (int i = 0; i < 50; ++i) {
        int bright = 0;
        for (int k = 0; k < 28 * 28; ++k)
            if (a.pixels[static_cast<std::size_t>(i) * 784 + k] > 120) ++bright;
        CHECK(bright > 10);
    }
}
