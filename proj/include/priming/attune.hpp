#pragma once

#include "priming/pool.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace priming {

// Ordered per-class embedding sequences the centroids are computed from.
// Order is fixed (pool cluster order, then appended shots) so the per-class
// sums are reproducible.
struct ClusterEmbeddings {
  Eigen::Index dim = 0;
  std::vector<std::vector<Eigen::VectorXf>> clusters;

  int n_classes() const { return static_cast<int>(clusters.size()); }
};

ClusterEmbeddings gather_clusters(const PrimingPool& pool, const Corpus& corpus);

// Appends each shot to its class's sequence, `repeat` times. Pool entries and
// the corpus are untouched.
void mix_shots(ClusterEmbeddings& clusters, std::span<const LabeledExample> shots, int repeat = 1);
ClusterEmbeddings mix_shots(const PrimingPool& pool, const Corpus& corpus,
                            std::span<const LabeledExample> shots, int repeat = 1);

// Mean of the cluster, rescaled to unit norm. Inputs are assumed unit-norm.
Eigen::VectorXf class_centroid(std::span<const Eigen::VectorXf> cluster);

struct CentroidHead {
  HeadMatrix W;  // flagged columns are zero
  std::vector<std::size_t> support;
  std::vector<std::uint8_t> flagged;  // 1 where the cluster was empty
};

CentroidHead build_centroid_head(const ClusterEmbeddings& clusters);

// α(n) = exp(−(n/n₀)^p); the fixed override short-circuits the schedule.
struct AlphaSchedule {
  enum class Mode { PerClass, Global };
  double n0 = 10.0;
  double p = 2.0;
  Mode mode = Mode::PerClass;
  std::optional<double> fixed;
};

std::string to_string(AlphaSchedule::Mode mode);
AlphaSchedule::Mode alpha_mode_from_string(std::string_view text);

double compute_alpha(std::uint64_t n, const AlphaSchedule& sched);

struct EnsembleHead {
  HeadMatrix W;  // column c = (1−α_c)·wft_c + α_c·wz_c
  std::vector<float> alphas;
};

// Flagged (empty) classes always take α = 1, overriding schedule and fixed
// value alike, so they fall back to the text column. Columns are not
// renormalized unless asked.
EnsembleHead ensemble_heads(const CentroidHead& wft, const ZeroShotHead& wz,
                            const AlphaSchedule& sched, bool renormalize = false);

// Head file: magic "NPHEAD01", d (u32 LE), n (u32 LE), role byte, n×d float32
// LE column-major, then n float32 α values (zeros for non-ensemble roles).
enum class HeadRole : std::uint8_t { ZeroShot = 0, Centroid = 1, Ensembled = 2 };

struct StoredHead {
  HeadMatrix W;
  HeadRole role = HeadRole::ZeroShot;
  std::vector<float> alphas;
};

StoredHead as_stored(const ZeroShotHead& head);
StoredHead as_stored(const CentroidHead& head);
StoredHead as_stored(const EnsembleHead& head);

void save_head(const StoredHead& head, const std::filesystem::path& path);
StoredHead load_head(const std::filesystem::path& path);

}  // namespace priming
