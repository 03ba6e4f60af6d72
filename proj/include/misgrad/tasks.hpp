#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "misgrad/errors.hpp"
#include "misgrad/linalg.hpp"

namespace misgrad {

enum class TaskKind { regression, classification };

struct Dataset {
    TaskKind kind = TaskKind::regression;
    std::string name;
    std::vector<Vec> inputs;
    std::vector<Vec> targets; // regression
    std::vector<int> labels;  // classification
    int class_count = 0;

    int size() const { return static_cast<int>(inputs.size()); }
    int input_dim() const { return inputs.empty() ? 0 : static_cast<int>(inputs.front().size()); }
    int target_dim() const {
        if (kind == TaskKind::classification) return class_count;
        return targets.empty() ? 0 : static_cast<int>(targets.front().size());
    }

    std::string manifest_line() const {
        std::ostringstream out;
        out << name << ',' << size() << ',' << input_dim() << ',';
        if (kind == TaskKind::classification)
            out << "class" << class_count;
        else
            out << "vec" << target_dim();
        return out.str();
    }
};

// ---------------------------------------------------------------------------
// Polynomial regression
// ---------------------------------------------------------------------------

// Inputs are monomials of the domain-normalized coordinate t = (x-mid)/half,
// so every feature lives in [-1,1] regardless of the polynomial order; the
// reference coefficients are reported in the same normalized basis. A linear
// model on these features is a convex least-squares problem.
struct PolynomialTask {
    Dataset data;
    Vec reference_coeffs; // c_0..c_order in the normalized basis
    double domain_lo = 0.0, domain_hi = 0.0;
};

inline PolynomialTask gen_polynomial(int order, int n_points, double lo, double hi, double noise_sd,
                                     std::uint64_t seed) {
    if (order < 0) throw ConfigInvalid("gen_polynomial: order must be >= 0");
    if (n_points < order + 1) throw ConfigInvalid("gen_polynomial: need at least order+1 points");
    if (!(hi > lo)) throw ConfigInvalid("gen_polynomial: empty domain");
    Rng rng(seed, 0x901F);
    PolynomialTask task;
    task.domain_lo = lo;
    task.domain_hi = hi;
    task.reference_coeffs.resize(static_cast<std::size_t>(order) + 1);
    for (double& c : task.reference_coeffs) c = 2.0 * rng.uniform() - 1.0;

    const double mid = 0.5 * (lo + hi);
    const double half = 0.5 * (hi - lo);
    Dataset& d = task.data;
    d.kind = TaskKind::regression;
    d.name = "poly" + std::to_string(order);
    for (int i = 0; i < n_points; ++i) {
        const double x = lo + (hi - lo) * rng.uniform();
        const double t = (x - mid) / half;
        Vec features(static_cast<std::size_t>(order));
        double pow_t = 1.0;
        double y = task.reference_coeffs[0];
        for (int k = 1; k <= order; ++k) {
            pow_t *= t;
            features[static_cast<std::size_t>(k) - 1] = pow_t;
            y += task.reference_coeffs[static_cast<std::size_t>(k)] * pow_t;
        }
        if (noise_sd > 0.0) y += noise_sd * rng.normal();
        d.inputs.push_back(std::move(features));
        d.targets.push_back({y});
    }
    return task;
}

// ---------------------------------------------------------------------------
// Toy 2-D classification
// ---------------------------------------------------------------------------

// Three interleaved spiral arms centered in the unit square; class regions
// are curved and balanced by construction (round-robin class assignment).
inline Dataset gen_toy_classification(int n_points, std::uint64_t seed) {
    if (n_points < 3) throw ConfigInvalid("gen_toy_classification: need at least 3 points");
    Rng rng(seed, 0x701D);
    Dataset d;
    d.kind = TaskKind::classification;
    d.name = "toy2d";
    d.class_count = 3;
    constexpr double two_pi = 2.0 * 3.14159265358979323846;
    for (int i = 0; i < n_points; ++i) {
        const int c = i % 3;
        const double t = rng.uniform();
        double r = 0.06 + 0.38 * t + 0.02 * rng.normal();
        r = std::clamp(r, 0.02, 0.47);
        const double angle = two_pi * c / 3.0 + 1.6 * two_pi / 3.0 * t;
        d.inputs.push_back({0.5 + r * std::cos(angle), 0.5 + r * std::sin(angle)});
        d.labels.push_back(c);
    }
    return d;
}

// ---------------------------------------------------------------------------
// Binary PPM (P6), the only image format used
// ---------------------------------------------------------------------------

struct PpmImage {
    int width = 0, height = 0;
    std::vector<std::uint8_t> rgb; // row-major, 3 bytes per pixel
};

namespace detail {

inline int ppm_read_int(std::istream& in) {
    // Skips whitespace and '#' comment lines, then reads one decimal value.
    for (;;) {
        const int c = in.peek();
        if (c == EOF) throw MalformedImage("ppm: truncated header");
        if (c == '#') {
            std::string line;
            std::getline(in, line);
            continue;
        }
        if (std::isspace(c)) {
            in.get();
            continue;
        }
        break;
    }
    int value = 0;
    if (!(in >> value)) throw MalformedImage("ppm: malformed header value");
    return value;
}

} // namespace detail

inline PpmImage read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MalformedImage("ppm: cannot open " + path);
    std::string magic;
    in >> magic;
    if (magic != "P6") throw UnsupportedFormat("ppm: expected binary P6, got '" + magic + "'");
    PpmImage img;
    img.width = detail::ppm_read_int(in);
    img.height = detail::ppm_read_int(in);
    const int maxval = detail::ppm_read_int(in);
    if (img.width <= 0 || img.height <= 0) throw MalformedImage("ppm: bad dimensions");
    if (maxval != 255) throw UnsupportedFormat("ppm: only 8-bit images are supported");
    in.get(); // single whitespace after maxval
    img.rgb.resize(static_cast<std::size_t>(img.width) * img.height * 3);
    in.read(reinterpret_cast<char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.rgb.size()))
        throw MalformedImage("ppm: truncated pixel data");
    return img;
}

inline void write_ppm(const PpmImage& img, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("ppm: cannot write " + path);
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.rgb.data()), static_cast<std::streamsize>(img.rgb.size()));
}

// Pixel-to-sample mapping: inputs are pixel-center coordinates in [0,1]^2,
// targets the RGB triple in [0,1]^3. With resolution == 0 (or the native
// size) the mapping is lossless and rendering reproduces the file byte for
// byte. A smaller training resolution must divide the native size; blocks
// are box-averaged.
inline Dataset image_regression_dataset(const PpmImage& img, int resolution = 0) {
    Dataset d;
    d.kind = TaskKind::regression;
    d.name = "image";
    int w = img.width, h = img.height;
    if (resolution > 0 && (resolution != img.width || resolution != img.height)) {
        if (img.width != img.height) throw UnsupportedFormat("image: resampling needs a square image");
        if (resolution > img.width || img.width % resolution != 0)
            throw UnsupportedFormat("image: training resolution must divide the image size");
        w = h = resolution;
    }
    const int block = img.width / w;
    d.inputs.reserve(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            d.inputs.push_back({(x + 0.5) / w, (y + 0.5) / h});
            double acc[3] = {0.0, 0.0, 0.0};
            for (int by = 0; by < block; ++by)
                for (int bx = 0; bx < block; ++bx) {
                    const std::size_t at =
                        (static_cast<std::size_t>(y * block + by) * img.width + (x * block + bx)) * 3;
                    for (int c = 0; c < 3; ++c) acc[c] += img.rgb[at + c];
                }
            const double n = static_cast<double>(block) * block * 255.0;
            d.targets.push_back({acc[0] / n, acc[1] / n, acc[2] / n});
        }
    return d;
}

inline Dataset load_image_regression(const std::string& path, int resolution = 0) {
    return image_regression_dataset(read_ppm(path), resolution);
}

inline PpmImage render_to_ppm(const Dataset& d, int width, int height) {
    if (d.kind != TaskKind::regression || d.target_dim() != 3 || d.size() != width * height)
        throw ShapeMismatch("render_to_ppm: dataset is not a width x height RGB grid");
    PpmImage img;
    img.width = width;
    img.height = height;
    img.rgb.resize(static_cast<std::size_t>(width) * height * 3);
    for (int i = 0; i < d.size(); ++i)
        for (int c = 0; c < 3; ++c) {
            const double v = std::clamp(d.targets[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)], 0.0, 1.0);
            img.rgb[static_cast<std::size_t>(i) * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
        }
    return img;
}

// ---------------------------------------------------------------------------
// IDX image/label files
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint32_t idx_read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw MalformedIdx("idx: truncated header");
    return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
           (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

inline void idx_write_u32(std::ostream& out, std::uint32_t v) {
    const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                       static_cast<char>(v)};
    out.write(b, 4);
}

} // namespace detail

struct IdxImages {
    int count = 0, rows = 0, cols = 0;
    std::vector<std::uint8_t> pixels; // count * rows * cols
};

inline IdxImages read_idx_images(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MalformedIdx("idx: cannot open " + path);
    if (detail::idx_read_u32(in) != 0x00000803u) throw MalformedIdx("idx: bad image magic in " + path);
    IdxImages idx;
    idx.count = static_cast<int>(detail::idx_read_u32(in));
    idx.rows = static_cast<int>(detail::idx_read_u32(in));
    idx.cols = static_cast<int>(detail::idx_read_u32(in));
    if (idx.count < 0 || idx.rows <= 0 || idx.cols <= 0) throw MalformedIdx("idx: bad image dimensions");
    idx.pixels.resize(static_cast<std::size_t>(idx.count) * idx.rows * idx.cols);
    in.read(reinterpret_cast<char*>(idx.pixels.data()), static_cast<std::streamsize>(idx.pixels.size()));
    if (in.gcount() != static_cast<std::streamsize>(idx.pixels.size()))
        throw MalformedIdx("idx: truncated image payload");
    return idx;
}

inline std::vector<std::uint8_t> read_idx_labels(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MalformedIdx("idx: cannot open " + path);
    if (detail::idx_read_u32(in) != 0x00000801u) throw MalformedIdx("idx: bad label magic in " + path);
    const int count = static_cast<int>(detail::idx_read_u32(in));
    if (count < 0) throw MalformedIdx("idx: bad label count");
    std::vector<std::uint8_t> labels(static_cast<std::size_t>(count));
    in.read(reinterpret_cast<char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
    if (in.gcount() != static_cast<std::streamsize>(labels.size()))
        throw MalformedIdx("idx: truncated label payload");
    return labels;
}

inline void write_idx_images(const std::string& path, const std::vector<std::uint8_t>& pixels, int count,
                             int rows, int cols) {
    if (static_cast<std::size_t>(count) * rows * cols != pixels.size())
        throw ShapeMismatch("write_idx_images: pixel buffer size mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("idx: cannot write " + path);
    detail::idx_write_u32(out, 0x00000803u);
    detail::idx_write_u32(out, static_cast<std::uint32_t>(count));
    detail::idx_write_u32(out, static_cast<std::uint32_t>(rows));
    detail::idx_write_u32(out, static_cast<std::uint32_t>(cols));
    out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

inline void write_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("idx: cannot write " + path);
    detail::idx_write_u32(out, 0x00000801u);
    detail::idx_write_u32(out, static_cast<std::uint32_t>(labels.size()));
    out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

// Stratified subset of an IDX image/label pair: near-equal per-class counts
// (difference at most one), seed-deterministic selection and final order.
inline Dataset load_idx_subset(const std::string& images_path, const std::string& labels_path, int n_take,
                               std::uint64_t seed) {
    const IdxImages images = read_idx_images(images_path);
    const std::vector<std::uint8_t> labels = read_idx_labels(labels_path);
    if (static_cast<int>(labels.size()) != images.count)
        throw LabelImageCountMismatch("idx: image and label counts differ");
    if (n_take == 0) throw EmptySubset("idx: requested an empty subset");
    if (n_take < 0 || n_take > images.count) throw ConfigInvalid("idx: subset larger than dataset");

    int class_count = 0;
    for (std::uint8_t l : labels) class_count = std::max(class_count, static_cast<int>(l) + 1);

    std::vector<std::vector<int>> by_class(static_cast<std::size_t>(class_count));
    for (int i = 0; i < images.count; ++i) by_class[labels[static_cast<std::size_t>(i)]].push_back(i);

    Rng rng(seed, 0x1D8);
    std::vector<int> chosen;
    chosen.reserve(static_cast<std::size_t>(n_take));
    const int base = n_take / class_count;
    const int extra = n_take % class_count;
    for (int c = 0; c < class_count; ++c) {
        auto& pool = by_class[static_cast<std::size_t>(c)];
        const int quota = base + (c < extra ? 1 : 0);
        if (static_cast<int>(pool.size()) < quota)
            throw MalformedIdx("idx: class " + std::to_string(c) + " too small for a stratified subset");
        for (int i = static_cast<int>(pool.size()) - 1; i > 0; --i)
            std::swap(pool[static_cast<std::size_t>(i)], pool[rng.below(static_cast<std::uint32_t>(i) + 1)]);
        chosen.insert(chosen.end(), pool.begin(), pool.begin() + quota);
    }
    // Shuffle the final order so in-order passes are not class-sorted.
    for (int i = static_cast<int>(chosen.size()) - 1; i > 0; --i)
        std::swap(chosen[static_cast<std::size_t>(i)], chosen[rng.below(static_cast<std::uint32_t>(i) + 1)]);

    Dataset d;
    d.kind = TaskKind::classification;
    d.name = "idx";
    d.class_count = class_count;
    const std::size_t dim = static_cast<std::size_t>(images.rows) * images.cols;
    for (int id : chosen) {
        Vec x(dim);
        const std::uint8_t* px = &images.pixels[static_cast<std::size_t>(id) * dim];
        for (std::size_t k = 0; k < dim; ++k) x[k] = px[k] / 255.0;
        d.inputs.push_back(std::move(x));
        d.labels.push_back(labels[static_cast<std::size_t>(id)]);
    }
    return d;
}

// ---------------------------------------------------------------------------
// Synthetic glyph classification data (IDX-format fixture generator)
// ---------------------------------------------------------------------------

namespace detail {

inline const std::array<std::array<const char*, 7>, 10>& glyph_font() {
    static const std::array<std::array<const char*, 7>, 10> font = {{
        {" ##### ", "#     #", "#     #", "#     #", "#     #", "#     #", " ##### "},
        {"   #   ", "  ##   ", "   #   ", "   #   ", "   #   ", "   #   ", " ##### "},
        {" ##### ", "#     #", "      #", " ##### ", "#      ", "#      ", "#######"},
        {" ##### ", "      #", "      #", "  #### ", "      #", "      #", " ##### "},
        {"#     #", "#     #", "#     #", "#######", "      #", "      #", "      #"},
        {"#######", "#      ", "#      ", "###### ", "      #", "      #", "###### "},
        {" ##### ", "#      ", "#      ", "###### ", "#     #", "#     #", " ##### "},
        {"#######", "      #", "     # ", "    #  ", "   #   ", "  #    ", " #     "},
        {" ##### ", "#     #", "#     #", " ##### ", "#     #", "#     #", " ##### "},
        {" ##### ", "#     #", "#     #", " ######", "      #", "      #", " ##### "},
    }};
    return font;
}

} // namespace detail

struct SynthIdxData {
    std::vector<std::uint8_t> pixels; // n * 28 * 28
    std::vector<std::uint8_t> labels;
    int rows = 28, cols = 28;
};

// Renders 28x28 glyph images with random placement, contrast and noise. A
// slice of the samples is deliberately hard (heavy noise), which spreads the
// per-sample gradient distribution the way real datasets do.
inline SynthIdxData gen_synth_glyphs(int n, std::uint64_t seed, double hard_fraction = 0.15) {
    Rng rng(seed, 0x5D16);
    SynthIdxData out;
    out.pixels.resize(static_cast<std::size_t>(n) * 28 * 28);
    out.labels.resize(static_cast<std::size_t>(n));
    const auto& font = detail::glyph_font();
    for (int i = 0; i < n; ++i) {
        const int cls = i % 10;
        out.labels[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(cls);
        const bool hard = rng.uniform() < hard_fraction;
        const double fg = 0.55 + 0.45 * rng.uniform();
        const double noise_sd = hard ? 0.45 : 0.06;
        const int ox = 1 + static_cast<int>(rng.below(5));
        const int oy = 1 + static_cast<int>(rng.below(5));
        std::uint8_t* img = &out.pixels[static_cast<std::size_t>(i) * 28 * 28];
        for (int y = 0; y < 28; ++y)
            for (int x = 0; x < 28; ++x) {
                double v = 0.0;
                const int gy = (y - oy) / 3, gx = (x - ox) / 3;
                if (y >= oy && x >= ox && gy < 7 && gx < 7 && font[static_cast<std::size_t>(cls)][static_cast<std::size_t>(gy)][gx] == '#')
                    v = fg;
                v += noise_sd * rng.normal();
                img[y * 28 + x] = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
            }
    }
    return out;
}

inline void write_synth_idx(const std::string& images_path, const std::string& labels_path, int n,
                            std::uint64_t seed, double hard_fraction = 0.15) {
    const SynthIdxData data = gen_synth_glyphs(n, seed, hard_fraction);
    write_idx_images(images_path, data.pixels, n, data.rows, data.cols);
    write_idx_labels(labels_path, data.labels);
}

} // namespace misgrad
