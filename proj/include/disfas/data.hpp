#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "disfas/rng.hpp"

namespace disfas::data {

// HWC float image, 3 channels, values in [0,1], quantized to the 8-bit grid
// so the in-memory pipeline and the PNG-on-disk pipeline see identical data.
struct Image {
    int h = 0, w = 0;
    std::vector<float> pix;  // h*w*3

    float& at(int y, int x, int c) { return pix[static_cast<size_t>((y * w + x) * 3 + c)]; }
    float at(int y, int x, int c) const { return pix[static_cast<size_t>((y * w + x) * 3 + c)]; }
};

struct LabeledSample {
    Image image;
    int liveness = 1;  // 1 = real, 0 = spoof
    int domain = 0;
    std::string sample_id;
    std::string spoof_type;  // empty for real samples
};

struct ContentTarget {
    int h = 0, w = 0;
    std::vector<float> map;  // h*w, values in [0,1]
};

struct SyntheticFactorSpec {
    int n_domains = 3;
    int n_per_domain = 200;
    int image_size = 32;
    std::vector<std::string> spoof_textures = {"stripes", "grid", "blur_halo"};
    uint64_t seed = 0;

    void validate() const;
};

struct ManifestRecord {
    std::string relative_path;
    int domain = 0;
    int liveness = 1;
    std::string spoof_type;

    bool operator==(const ManifestRecord&) const = default;
};

struct Manifest {
    std::string root;  // directory holding the referenced files; not serialized
    int n_domains = 0;
    std::vector<ManifestRecord> records;

    // Structural equality over the serialized fields.
    bool equals(const Manifest& other) const {
        return n_domains == other.n_domains && records == other.records;
    }
};

// Opaque id used to key sidecar files: relative path, '/' -> '_', extension
// stripped.
std::string sample_id_of(const std::string& relative_path);

// Fixed per-domain-index acquisition signature (documented in the README).
struct DomainTransform {
    double hue_rot;     // radians, rotation about the gray axis
    double noise_sigma; // additive Gaussian noise, per channel
    double contrast;    // multiplicative on intensity
    double brightness;  // additive on intensity
};
DomainTransform domain_transform(int domain);

// Pure function of (spec, index); index = domain * n_per_domain + j.
LabeledSample generate_sample(const SyntheticFactorSpec& spec, int64_t index);

// Deterministic: identical spec => bit-identical samples. `workers` only
// affects wall-clock, never content.
std::pair<std::vector<LabeledSample>, Manifest> generate_synthetic_dataset(
    const SyntheticFactorSpec& spec, int workers = 1);

enum class ContentMode { shape_mask, precomputed };

// shape_mask: channel-mean grayscale, area-average pooled to target_size,
// min-max normalized (degenerate range maps to all zeros).
// precomputed: raw little-endian float32 file "<sample_id>.ct" under root.
ContentTarget content_target(const Image& image, int target_size, ContentMode mode,
                             const std::string& root = "", const std::string& sample_id = "");

void write_content_target(const ContentTarget& t, const std::string& path);

Manifest load_manifest(const std::string& path);
void write_manifest(const Manifest& m, const std::string& path);

void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

// Materialize a generated dataset: per-domain subdirectories of 8-bit PNGs
// plus "manifest.tsv" under out_dir.
void write_dataset(const std::vector<LabeledSample>& samples, const Manifest& manifest,
                   const std::string& out_dir);

// Load every record's image from disk.
std::vector<LabeledSample> load_samples(const Manifest& manifest);

}  // namespace disfas::data
