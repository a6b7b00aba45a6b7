#include "disfas/data.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "disfas/errors.hpp"

namespace fs = std::filesystem;

namespace disfas::data {

namespace {

constexpr double kTau = 6.28318530717958647692;

// Orthonormal basis of the plane perpendicular to the gray axis (1,1,1)/sqrt(3).
// Both vectors have zero component sum, so the channel mean of any pixel is
// exactly its intensity coordinate; hue rotation never touches grayscale.
constexpr double kU[3] = {0.70710678118654752440, -0.70710678118654752440, 0.0};
constexpr double kV[3] = {0.40824829046386301637, 0.40824829046386301637, -0.81649658092772603273};

double fracpart(double x) { return x - std::floor(x); }

float quantize8(double v) {
    v = std::clamp(v, 0.0, 1.0);
    return static_cast<float>(std::lround(v * 255.0)) / 255.0f;
}

struct TexParams {
    int kind = -1;  // index into spec.spoof_textures; -1 = real
    double amp = 0.0;        // luminance modulation (weak)
    double chroma_amp = 0.0; // chroma-plane modulation (the dominant cue)
    double chroma_dir = 0.0; // direction in the chroma plane, pre domain rotation
    double period = 3.0;
    double angle = 0.0;
    double phase1 = 0.0;
    double phase2 = 0.0;
    double halo_amp = 0.0;
    double desat = 1.0;
};

}  // namespace

void SyntheticFactorSpec::validate() const {
    if (n_domains < 2) throw ConfigError("synthetic spec: n_domains must be >= 2");
    if (image_size < 8) throw ConfigError("synthetic spec: image_size must be >= 8");
    if (n_per_domain < 1) throw ConfigError("synthetic spec: n_per_domain must be >= 1");
    if (spoof_textures.empty()) throw ConfigError("synthetic spec: spoof_texture_set is empty");
    for (const auto& t : spoof_textures) {
        if (t != "stripes" && t != "grid" && t != "blur_halo") {
            throw ConfigError("synthetic spec: unknown spoof texture '" + t + "'");
        }
    }
}

std::string sample_id_of(const std::string& relative_path) {
    std::string id = relative_path;
    const size_t dot = id.find_last_of('.');
    if (dot != std::string::npos && dot > id.find_last_of('/') + 0) id = id.substr(0, dot);
    std::replace(id.begin(), id.end(), '/', '_');
    return id;
}

DomainTransform domain_transform(int domain) {
    check_contract(domain >= 0, "domain index must be non-negative");
    DomainTransform t;
    // Low-discrepancy sequences keyed by the domain index: every domain gets a
    // distinct hue/noise/contrast/brightness signature, fixed forever.
    t.hue_rot = fracpart(domain * 0.38196601125010515) * kTau;  // golden-angle steps
    t.noise_sigma = 0.004 + 0.012 * fracpart(0.6180339887498949 * (domain + 1));
    t.contrast = 0.92 + 0.16 * fracpart(0.7548776662466927 * (domain + 1));
    t.brightness = -0.05 + 0.10 * fracpart(0.5545497341558513 * (domain + 1));
    return t;
}

LabeledSample generate_sample(const SyntheticFactorSpec& spec, int64_t index) {
    spec.validate();
    const int64_t total = static_cast<int64_t>(spec.n_domains) * spec.n_per_domain;
    check_contract(index >= 0 && index < total, "sample index out of range");
    const int domain = static_cast<int>(index / spec.n_per_domain);
    const int j = static_cast<int>(index % spec.n_per_domain);
    const int sz = spec.image_size;

    Rng rng = Rng::stream(spec.seed, static_cast<uint64_t>(index));

    // -- content factor: ellipse geometry and colors --
    const double cx = rng.uniform(0.38, 0.62) * sz;
    const double cy = rng.uniform(0.38, 0.62) * sz;
    const double ax = rng.uniform(0.22, 0.34) * sz;
    const double bx = rng.uniform(0.18, 0.30) * sz;
    const double orient = rng.uniform(0.0, kTau / 2.0);
    const double face_intensity = rng.uniform(0.52, 0.68);
    const double face_hue = 0.6 + rng.uniform(-0.5, 0.5);
    const double face_sat = rng.uniform(0.10, 0.16);
    const double bg_intensity = rng.uniform(0.28, 0.42);
    const double bg_hue = 3.4 + rng.uniform(-0.5, 0.5);
    const double bg_sat = rng.uniform(0.08, 0.14);
    const double speckle_sigma = rng.uniform(0.015, 0.03);

    // -- liveness factor --
    // Moire textures modulate mostly the chroma plane inside a narrow
    // direction band (anchored at 0.9 rad before the domain rotation), with a
    // weak luminance component. Detectors tuned to the specific color
    // directions seen in the source domains do not survive the target
    // domain's hue rotation; rotation-invariant chroma energy does.
    const int liveness = (j % 2 == 0) ? 1 : 0;
    TexParams tex;
    std::string spoof_type;
    if (liveness == 0) {
        tex.kind = static_cast<int>(rng.uniform_int(spec.spoof_textures.size()));
        spoof_type = spec.spoof_textures[static_cast<size_t>(tex.kind)];
        tex.amp = rng.uniform(0.04, 0.08);
        tex.chroma_amp = rng.uniform(0.15, 0.22);
        tex.chroma_dir = 0.9 + rng.uniform(-0.35, 0.35);
        tex.period = rng.uniform(2.5, 4.5);
        tex.angle = rng.uniform(0.0, kTau / 2.0);
        tex.phase1 = rng.uniform(0.0, kTau);
        tex.phase2 = rng.uniform(0.0, kTau);
        tex.halo_amp = rng.uniform(0.08, 0.14);
        tex.desat = rng.uniform(0.70, 0.85);
    }

    // Intensity field plus per-pixel speckle (content detail present on every
    // face, real or spoof).
    std::vector<double> intensity(static_cast<size_t>(sz) * sz);
    std::vector<double> ellipse_r2(static_cast<size_t>(sz) * sz);
    const double co = std::cos(orient), so = std::sin(orient);
    for (int y = 0; y < sz; ++y) {
        for (int x = 0; x < sz; ++x) {
            const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
            const double ex = (dx * co + dy * so) / ax;
            const double ey = (-dx * so + dy * co) / bx;
            const double r2 = ex * ex + ey * ey;
            ellipse_r2[static_cast<size_t>(y * sz + x)] = r2;
            double L = (r2 <= 1.0) ? face_intensity : bg_intensity;
            L *= 1.0 + speckle_sigma * rng.normal();
            intensity[static_cast<size_t>(y * sz + x)] = L;
        }
    }

    const std::string kind = spoof_type;
    std::vector<double> tex_mod(static_cast<size_t>(sz) * sz, 0.0);
    if (kind == "blur_halo") {
        // Local mean over the in-face neighborhood wipes out the speckle.
        std::vector<double> blurred = intensity;
        for (int y = 0; y < sz; ++y) {
            for (int x = 0; x < sz; ++x) {
                if (ellipse_r2[static_cast<size_t>(y * sz + x)] > 1.0) continue;
                double acc = 0.0;
                int cnt = 0;
                for (int oy = -2; oy <= 2; ++oy) {
                    for (int ox = -2; ox <= 2; ++ox) {
                        const int yy = y + oy, xx = x + ox;
                        if (yy < 0 || yy >= sz || xx < 0 || xx >= sz) continue;
                        if (ellipse_r2[static_cast<size_t>(yy * sz + xx)] > 1.0) continue;
                        acc += intensity[static_cast<size_t>(yy * sz + xx)];
                        ++cnt;
                    }
                }
                blurred[static_cast<size_t>(y * sz + x)] = acc / cnt;
            }
        }
        for (int i = 0; i < sz * sz; ++i) {
            const double r2 = ellipse_r2[static_cast<size_t>(i)];
            if (r2 > 1.0) continue;
            double L = blurred[static_cast<size_t>(i)];
            const double ring = std::max(0.0, 1.0 - std::abs(std::sqrt(r2) - 0.85) / 0.15);
            intensity[static_cast<size_t>(i)] = L * (1.0 + tex.halo_amp * ring);
        }
    } else if (kind == "stripes" || kind == "grid") {
        const double ca = std::cos(tex.angle), sa = std::sin(tex.angle);
        for (int y = 0; y < sz; ++y) {
            for (int x = 0; x < sz; ++x) {
                if (ellipse_r2[static_cast<size_t>(y * sz + x)] > 1.0) continue;
                const double t1 = (x * ca + y * sa) * kTau / tex.period + tex.phase1;
                double mod = std::sin(t1);
                if (kind == "grid") {
                    const double t2 = (-x * sa + y * ca) * kTau / tex.period + tex.phase2;
                    mod = 0.5 * (mod + std::sin(t2));
                }
                tex_mod[static_cast<size_t>(y * sz + x)] = mod;
            }
        }
    }

    // -- domain factor: hue rotation, global affine on intensity, sensor noise --
    const DomainTransform dt = domain_transform(domain);
    const double tex_dir = tex.chroma_dir + dt.hue_rot;
    const double tex_cu = tex.chroma_amp * std::cos(tex_dir);
    const double tex_cv = tex.chroma_amp * std::sin(tex_dir);
    LabeledSample out;
    out.image.h = sz;
    out.image.w = sz;
    out.image.pix.resize(static_cast<size_t>(sz) * sz * 3);
    for (int y = 0; y < sz; ++y) {
        for (int x = 0; x < sz; ++x) {
            const bool inside = ellipse_r2[static_cast<size_t>(y * sz + x)] <= 1.0;
            const double hue = (inside ? face_hue : bg_hue) + dt.hue_rot;
            double sat = inside ? face_sat : bg_sat;
            if (inside && kind == "blur_halo") sat *= tex.desat;
            const double mod = tex_mod[static_cast<size_t>(y * sz + x)];
            double L = intensity[static_cast<size_t>(y * sz + x)] * (1.0 + tex.amp * mod);
            L = dt.contrast * L + dt.brightness;
            const double ch = sat * std::cos(hue) + tex_cu * mod;
            const double sh = sat * std::sin(hue) + tex_cv * mod;
            for (int c = 0; c < 3; ++c) {
                const double v = L + ch * kU[c] + sh * kV[c] + dt.noise_sigma * rng.normal();
                out.image.at(y, x, c) = quantize8(v);
            }
        }
    }

    char buf[64];
    std::snprintf(buf, sizeof(buf), "d%d/s%05d.png", domain, j);
    out.liveness = liveness;
    out.domain = domain;
    out.spoof_type = spoof_type;
    out.sample_id = sample_id_of(buf);
    return out;
}

std::pair<std::vector<LabeledSample>, Manifest> generate_synthetic_dataset(
    const SyntheticFactorSpec& spec, int workers) {
    spec.validate();
    const int64_t total = static_cast<int64_t>(spec.n_domains) * spec.n_per_domain;
    std::vector<LabeledSample> samples(static_cast<size_t>(total));

    workers = std::max(1, workers);
    if (workers == 1) {
        for (int64_t i = 0; i < total; ++i) samples[static_cast<size_t>(i)] = generate_sample(spec, i);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < workers; ++t) {
            pool.emplace_back([&, t] {
                for (int64_t i = t; i < total; i += workers) {
                    samples[static_cast<size_t>(i)] = generate_sample(spec, i);
                }
            });
        }
        for (auto& th : pool) th.join();
    }

    Manifest m;
    m.n_domains = spec.n_domains;
    m.records.reserve(samples.size());
    for (int64_t i = 0; i < total; ++i) {
        const auto& s = samples[static_cast<size_t>(i)];
        char buf[64];
        std::snprintf(buf, sizeof(buf), "d%d/s%05d.png", s.domain,
                      static_cast<int>(i % spec.n_per_domain));
        m.records.push_back({buf, s.domain, s.liveness, s.spoof_type});
    }
    return {std::move(samples), std::move(m)};
}

ContentTarget content_target(const Image& image, int target_size, ContentMode mode,
                             const std::string& root, const std::string& sample_id) {
    check_contract(target_size >= 1, "content target size must be >= 1");
    ContentTarget t;
    t.h = target_size;
    t.w = target_size;
    if (mode == ContentMode::precomputed) {
        const std::string path = (fs::path(root) / (sample_id + ".ct")).string();
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("missing precomputed content target for sample '" + sample_id + "'");
        t.map.resize(static_cast<size_t>(target_size) * target_size);
        in.read(reinterpret_cast<char*>(t.map.data()),
                static_cast<std::streamsize>(t.map.size() * sizeof(float)));
        if (in.gcount() != static_cast<std::streamsize>(t.map.size() * sizeof(float))) {
            throw IoError("truncated content target file for sample '" + sample_id + "'");
        }
        return t;
    }

    check_contract(image.h == image.w, "shape_mask expects square images");
    check_contract(image.h % target_size == 0,
                   "image size " + std::to_string(image.h) + " not divisible by target size " +
                       std::to_string(target_size));
    const int f = image.h / target_size;
    t.map.assign(static_cast<size_t>(target_size) * target_size, 0.0f);
    for (int ty = 0; ty < target_size; ++ty) {
        for (int tx = 0; tx < target_size; ++tx) {
            double acc = 0.0;
            for (int y = ty * f; y < (ty + 1) * f; ++y) {
                for (int x = tx * f; x < (tx + 1) * f; ++x) {
                    acc += (image.at(y, x, 0) + image.at(y, x, 1) + image.at(y, x, 2)) / 3.0;
                }
            }
            t.map[static_cast<size_t>(ty * target_size + tx)] = static_cast<float>(acc / (f * f));
        }
    }
    float lo = t.map[0], hi = t.map[0];
    for (float v : t.map) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi - lo < 1e-12f) {
        std::fill(t.map.begin(), t.map.end(), 0.0f);
    } else {
        for (float& v : t.map) v = (v - lo) / (hi - lo);
    }
    return t;
}

void write_content_target(const ContentTarget& t, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write content target file " + path);
    out.write(reinterpret_cast<const char*>(t.map.data()),
              static_cast<std::streamsize>(t.map.size() * sizeof(float)));
    if (!out) throw IoError("short write to " + path);
}

// -- manifest ----------------------------------------------------------------

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    size_t start = 0;
    for (;;) {
        const size_t tab = line.find('\t', start);
        if (tab == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
}

int parse_int(const std::string& s, int line_no, const char* what) {
    try {
        size_t pos = 0;
        const int v = std::stoi(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw IoError("manifest parse error at line " + std::to_string(line_no) + ": bad " + what +
                      " '" + s + "'");
    }
}

}  // namespace

Manifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path);
    Manifest m;
    m.root = fs::path(path).parent_path().string();
    if (m.root.empty()) m.root = ".";

    std::string line;
    if (!std::getline(in, line)) throw IoError("manifest parse error at line 1: empty file");
    auto head = split_tabs(line);
    if (head.size() != 2 || head[0] != "DISFAS-MANIFEST v1" || head[1].rfind("n_domains=", 0) != 0) {
        throw IoError("manifest parse error at line 1: bad header '" + line + "'");
    }
    m.n_domains = parse_int(head[1].substr(10), 1, "n_domains");
    if (m.n_domains < 1) throw IoError("manifest validation error at line 1: n_domains < 1");

    int line_no = 1;
    std::vector<bool> seen(static_cast<size_t>(m.n_domains), false);
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        auto f = split_tabs(line);
        if (f.size() != 4 || f[0].empty()) {
            throw IoError("manifest parse error at line " + std::to_string(line_no) +
                          ": expected 4 tab-separated fields");
        }
        ManifestRecord r;
        r.relative_path = f[0];
        r.domain = parse_int(f[1], line_no, "domain");
        r.liveness = parse_int(f[2], line_no, "liveness");
        r.spoof_type = f[3];
        if (r.domain < 0 || r.domain >= m.n_domains) {
            throw IoError("manifest validation error at line " + std::to_string(line_no) +
                          ": domain " + std::to_string(r.domain) + " out of range [0," +
                          std::to_string(m.n_domains) + ")");
        }
        if (r.liveness != 0 && r.liveness != 1) {
            throw IoError("manifest validation error at line " + std::to_string(line_no) +
                          ": liveness must be 0 or 1");
        }
        if (!fs::exists(fs::path(m.root) / r.relative_path)) {
            throw IoError("manifest validation error at line " + std::to_string(line_no) +
                          ": missing file " + r.relative_path);
        }
        seen[static_cast<size_t>(r.domain)] = true;
        m.records.push_back(std::move(r));
    }
    // Domains must form a contiguous range starting at 0.
    int top = m.n_domains;
    while (top > 0 && !seen[static_cast<size_t>(top - 1)]) --top;
    for (int d = 0; d < top; ++d) {
        if (!seen[static_cast<size_t>(d)]) {
            throw IoError("manifest validation error: domain values are not contiguous from 0 (gap at " +
                          std::to_string(d) + ")");
        }
    }
    return m;
}

void write_manifest(const Manifest& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write manifest " + path);
    out << "DISFAS-MANIFEST v1\tn_domains=" << m.n_domains << "\n";
    for (const auto& r : m.records) {
        out << r.relative_path << '\t' << r.domain << '\t' << r.liveness << '\t' << r.spoof_type
            << "\n";
    }
    if (!out) throw IoError("short write to " + path);
}

// -- PNG ---------------------------------------------------------------------

void write_png(const std::string& path, const Image& img) {
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw IoError("cannot open " + path + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        std::fclose(fp);
        throw IoError("libpng failure writing " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.w), static_cast<png_uint_32>(img.h), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(static_cast<size_t>(img.w) * 3);
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x) {
            for (int c = 0; c < 3; ++c) {
                row[static_cast<size_t>(x * 3 + c)] =
                    static_cast<png_byte>(std::lround(img.at(y, x, c) * 255.0f));
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

Image read_png(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw IoError("cannot open " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        std::fclose(fp);
        throw IoError("libpng failure reading " + path);
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
        png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA) {
        png_set_gray_to_rgb(png);
    }
    png_read_update_info(png, info);

    Image img;
    img.h = static_cast<int>(png_get_image_height(png, info));
    img.w = static_cast<int>(png_get_image_width(png, info));
    img.pix.resize(static_cast<size_t>(img.h) * img.w * 3);
    std::vector<png_byte> row(png_get_rowbytes(png, info));
    for (int y = 0; y < img.h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < img.w; ++x) {
            for (int c = 0; c < 3; ++c) {
                img.at(y, x, c) = static_cast<float>(row[static_cast<size_t>(x * 3 + c)]) / 255.0f;
            }
        }
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return img;
}

void write_dataset(const std::vector<LabeledSample>& samples, const Manifest& manifest,
                   const std::string& out_dir) {
    check_contract(samples.size() == manifest.records.size(), "samples/manifest record count mismatch");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());
    for (size_t i = 0; i < samples.size(); ++i) {
        const fs::path p = fs::path(out_dir) / manifest.records[i].relative_path;
        fs::create_directories(p.parent_path(), ec);
        if (ec) throw IoError("cannot create " + p.parent_path().string());
        write_png(p.string(), samples[i].image);
    }
    write_manifest(manifest, (fs::path(out_dir) / "manifest.tsv").string());
}

std::vector<LabeledSample> load_samples(const Manifest& manifest) {
    std::vector<LabeledSample> out;
    out.reserve(manifest.records.size());
    for (const auto& r : manifest.records) {
        LabeledSample s;
        s.image = read_png((fs::path(manifest.root) / r.relative_path).string());
        s.liveness = r.liveness;
        s.domain = r.domain;
        s.spoof_type = r.spoof_type;
        s.sample_id = sample_id_of(r.relative_path);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace disfas::data
