#include "priming/attune.hpp"

#include "priming/detail/bytes.hpp"
#include "priming/numeric.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

namespace priming {

ClusterEmbeddings gather_clusters(const PrimingPool& pool, const Corpus& corpus) {
  ClusterEmbeddings out;
  out.dim = pool.dim;
  out.clusters.resize(pool.clusters.size());
  for (std::size_t c = 0; c < pool.clusters.size(); ++c) {
    auto& cluster = out.clusters[c];
    cluster.reserve(pool.clusters[c].size());
    for (const auto& entry : pool.clusters[c]) {
      cluster.emplace_back(
          corpus.embeddings.row(corpus.row_index(entry.record_id)).transpose());
    }
  }
  return out;
}

void mix_shots(ClusterEmbeddings& clusters, std::span<const LabeledExample> shots, int repeat) {
  if (repeat < 1) fail(ErrorKind::InvalidConfig, "shot repeat must be at least 1");
  for (const auto& shot : shots) {
    if (shot.class_index < 0 || shot.class_index >= clusters.n_classes()) {
      fail(ErrorKind::UnknownClass,
           "shot labeled with class " + std::to_string(shot.class_index) + ", have " +
               std::to_string(clusters.n_classes()) + " classes");
    }
    if (shot.embedding.size() != clusters.dim) {
      fail(ErrorKind::DimensionMismatch,
           "shot has dimension " + std::to_string(shot.embedding.size()) + ", clusters have " +
               std::to_string(clusters.dim));
    }
  }
  for (const auto& shot : shots) {
    auto& cluster = clusters.clusters[static_cast<std::size_t>(shot.class_index)];
    for (int r = 0; r < repeat; ++r) cluster.push_back(shot.embedding);
  }
}

ClusterEmbeddings mix_shots(const PrimingPool& pool, const Corpus& corpus,
                            std::span<const LabeledExample> shots, int repeat) {
  auto clusters = gather_clusters(pool, corpus);
  mix_shots(clusters, shots, repeat);
  return clusters;
}

Eigen::VectorXf class_centroid(std::span<const Eigen::VectorXf> cluster) {
  if (cluster.empty()) fail(ErrorKind::EmptyCluster, "centroid of an empty cluster");
  const Eigen::Index d = cluster[0].size();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(d);
  for (const auto& v : cluster) {
    if (v.size() != d) fail(ErrorKind::DimensionMismatch, "mixed dimensions within a cluster");
    sum += v.cast<double>();
  }
  const Eigen::VectorXd mean = sum / static_cast<double>(cluster.size());
  const double norm = mean.norm();
  if (norm < 1e-12) fail(ErrorKind::DegenerateCentroid, "cluster mean has near-zero norm");
  return (mean / norm).cast<float>();
}

CentroidHead build_centroid_head(const ClusterEmbeddings& clusters) {
  CentroidHead head;
  const auto n = static_cast<Eigen::Index>(clusters.clusters.size());
  head.W = HeadMatrix::Zero(clusters.dim, n);
  head.support.resize(clusters.clusters.size());
  head.flagged.resize(clusters.clusters.size());
  for (std::size_t c = 0; c < clusters.clusters.size(); ++c) {
    const auto& cluster = clusters.clusters[c];
    head.support[c] = cluster.size();
    head.flagged[c] = cluster.empty() ? 1 : 0;
    if (cluster.empty()) continue;
    try {
      head.W.col(static_cast<Eigen::Index>(c)) = class_centroid(cluster);
    } catch (const PipelineError& e) {
      if (e.kind() != ErrorKind::DegenerateCentroid) throw;
      fail(ErrorKind::DegenerateCentroid, "class " + std::to_string(c) + ": " + e.what());
    }
  }
  return head;
}

std::string to_string(AlphaSchedule::Mode mode) {
  return mode == AlphaSchedule::Mode::PerClass ? "per_class" : "global";
}

AlphaSchedule::Mode alpha_mode_from_string(std::string_view text) {
  if (text == "per_class") return AlphaSchedule::Mode::PerClass;
  if (text == "global") return AlphaSchedule::Mode::Global;
  fail(ErrorKind::InvalidConfig, "unknown alpha mode \"" + std::string(text) + "\"");
}

namespace {

void validate(const AlphaSchedule& sched) {
  if (!(sched.n0 > 0.0)) fail(ErrorKind::InvalidConfig, "alpha n0 must be positive");
  if (!(sched.p > 0.0)) fail(ErrorKind::InvalidConfig, "alpha exponent must be positive");
  if (sched.fixed && !(*sched.fixed >= 0.0 && *sched.fixed <= 1.0)) {
    fail(ErrorKind::InvalidConfig, "fixed alpha must lie in [0, 1]");
  }
}

}  // namespace

double compute_alpha(std::uint64_t n, const AlphaSchedule& sched) {
  validate(sched);
  if (sched.fixed) return *sched.fixed;
  if (n == 0) return 1.0;
  return std::exp(-std::pow(static_cast<double>(n) / sched.n0, sched.p));
}

EnsembleHead ensemble_heads(const CentroidHead& wft, const ZeroShotHead& wz,
                            const AlphaSchedule& sched, bool renormalize) {
  validate(sched);
  if (wft.W.rows() != wz.W.rows() || wft.W.cols() != wz.W.cols()) {
    fail(ErrorKind::ShapeMismatch,
         "centroid head is " + std::to_string(wft.W.rows()) + "x" + std::to_string(wft.W.cols()) +
             ", zero-shot head is " + std::to_string(wz.W.rows()) + "x" +
             std::to_string(wz.W.cols()));
  }
  const auto n = static_cast<std::size_t>(wft.W.cols());
  if (wft.support.size() != n || wft.flagged.size() != n) {
    fail(ErrorKind::ShapeMismatch, "centroid head metadata does not match its column count");
  }

  std::uint64_t total = 0;
  for (const auto s : wft.support) total += s;

  EnsembleHead out;
  out.W.resize(wft.W.rows(), wft.W.cols());
  out.alphas.resize(n);
  for (std::size_t c = 0; c < n; ++c) {
    double alpha;
    if (wft.flagged[c]) {
      alpha = 1.0;  // no support at all: fall back to the text column
    } else if (sched.mode == AlphaSchedule::Mode::Global) {
      alpha = compute_alpha(total, sched);
    } else {
      alpha = compute_alpha(wft.support[c], sched);
    }
    out.alphas[c] = static_cast<float>(alpha);
    const auto col = static_cast<Eigen::Index>(c);
    Eigen::VectorXd mixed = (1.0 - alpha) * wft.W.col(col).cast<double>() +
                            alpha * wz.W.col(col).cast<double>();
    if (renormalize) {
      const double norm = mixed.norm();
      if (norm < 1e-12) {
        fail(ErrorKind::DegenerateCentroid,
             "class " + std::to_string(c) + ": ensembled column has near-zero norm");
      }
      mixed /= norm;
    }
    out.W.col(col) = mixed.cast<float>();
  }
  return out;
}

StoredHead as_stored(const ZeroShotHead& head) {
  return {head.W, HeadRole::ZeroShot, std::vector<float>(static_cast<std::size_t>(head.W.cols()))};
}

StoredHead as_stored(const CentroidHead& head) {
  return {head.W, HeadRole::Centroid, std::vector<float>(static_cast<std::size_t>(head.W.cols()))};
}

StoredHead as_stored(const EnsembleHead& head) {
  return {head.W, HeadRole::Ensembled, head.alphas};
}

static constexpr char kHeadMagic[8] = {'N', 'P', 'H', 'E', 'A', 'D', '0', '1'};

void save_head(const StoredHead& head, const std::filesystem::path& path) {
  if (head.alphas.size() != static_cast<std::size_t>(head.W.cols())) {
    fail(ErrorKind::ShapeMismatch, "alpha count does not match head columns");
  }
  auto out = detail::open_output(path, std::ios::out | std::ios::binary | std::ios::trunc);
  out.write(kHeadMagic, 8);
  detail::put_u32le(out, static_cast<std::uint32_t>(head.W.rows()));
  detail::put_u32le(out, static_cast<std::uint32_t>(head.W.cols()));
  const auto role = static_cast<char>(head.role);
  out.write(&role, 1);

  auto put_f32 = [&](float v) {
    auto bits = std::bit_cast<std::uint32_t>(v);
    if constexpr (std::endian::native == std::endian::big) {
      bits = __builtin_bswap32(bits);
    }
    char buf[4];
    std::memcpy(buf, &bits, 4);
    out.write(buf, 4);
  };
  // HeadMatrix is column-major, so plain element order is column-major.
  for (Eigen::Index c = 0; c < head.W.cols(); ++c) {
    for (Eigen::Index r = 0; r < head.W.rows(); ++r) put_f32(head.W(r, c));
  }
  for (const float a : head.alphas) put_f32(a);
  if (!out) fail(ErrorKind::IoError, "write failed: " + path.string());
}

StoredHead load_head(const std::filesystem::path& path) {
  auto in = detail::open_input(path, std::ios::in | std::ios::binary);
  const auto file_size = std::filesystem::file_size(path);
  detail::ByteReader reader(in, path.string());
  char magic[8];
  reader.read(magic, 8);
  if (std::memcmp(magic, kHeadMagic, 8) != 0) {
    fail(ErrorKind::MalformedHeader, path.string() + ": bad magic or unsupported version");
  }
  const std::uint32_t d = reader.u32le();
  const std::uint32_t n = reader.u32le();
  char role_byte;
  reader.read(&role_byte, 1);
  if (role_byte < 0 || role_byte > 2) {
    fail(ErrorKind::MalformedHeader, path.string() + ": unknown head role");
  }
  const std::uint64_t expected =
      17 + 4ull * (static_cast<std::uint64_t>(d) * n + n);
  if (file_size != expected) {
    fail(ErrorKind::TruncatedPayload,
         path.string() + ": expected " + std::to_string(expected) + " bytes, found " +
             std::to_string(file_size));
  }

  StoredHead head;
  head.role = static_cast<HeadRole>(role_byte);
  head.W.resize(d, n);
  auto get_f32 = [&]() {
    char buf[4];
    reader.read(buf, 4);
    std::uint32_t bits;
    std::memcpy(&bits, buf, 4);
    if constexpr (std::endian::native == std::endian::big) {
      bits = __builtin_bswap32(bits);
    }
    return std::bit_cast<float>(bits);
  };
  for (Eigen::Index c = 0; c < head.W.cols(); ++c) {
    for (Eigen::Index r = 0; r < head.W.rows(); ++r) head.W(r, c) = get_f32();
  }
  head.alphas.resize(n);
  for (auto& a : head.alphas) a = get_f32();
  if (!head.W.allFinite()) {
    fail(ErrorKind::NonFiniteValue, path.string() + ": head contains non-finite values");
  }
  return head;
}

}  // namespace priming
