#include "depthsynth/patch_index.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

namespace depthsynth {

int FeatureLayout::segment_index(const std::string& name) const {
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (segments[i].name == name) {
      return static_cast<int>(i);
    }
  }
  return -1;
}

PatchWindows accepted_windows(const Mask& mask, int width, int height, int k) {
  if (k % 2 == 0 || k < 3 || k > 15) {
    throw Error("patch size must be odd and within [3, 15], got " + std::to_string(k));
  }
  if (k > width || k > height) {
    throw Error("patch size " + std::to_string(k) + " exceeds image size");
  }
  if (mask.size() != static_cast<std::size_t>(width) * height) {
    throw Error("accepted_windows: mask size mismatch");
  }
  PatchWindows out;
  out.k = k;
  out.width = width;
  out.height = height;
  const int r = k / 2;
  const int need = (k * k + 1) / 2;
  // Summed-area table of the mask for O(1) window counts.
  std::vector<int> sat(static_cast<std::size_t>(width + 1) * (height + 1), 0);
  for (int y = 0; y < height; ++y) {
    int row = 0;
    for (int x = 0; x < width; ++x) {
      row += mask[static_cast<std::size_t>(y) * width + x] != 0;
      sat[static_cast<std::size_t>(y + 1) * (width + 1) + x + 1] =
          sat[static_cast<std::size_t>(y) * (width + 1) + x + 1] + row;
    }
  }
  auto count = [&](int x0, int y0, int x1, int y1) {  // inclusive-exclusive
    const auto at = [&](int x, int y) { return sat[static_cast<std::size_t>(y) * (width + 1) + x]; };
    return at(x1, y1) - at(x0, y1) - at(x1, y0) + at(x0, y0);
  };
  for (int y = r; y < height - r; ++y) {
    for (int x = r; x < width - r; ++x) {
      if (mask[static_cast<std::size_t>(y) * width + x] == 0) {
        continue;
      }
      if (count(x - r, y - r, x + r + 1, y + r + 1) >= need) {
        out.centers.push_back({x, y});
      }
    }
  }
  out.nearest = nearest_foreground(mask, width, height);
  return out;
}

std::vector<double> aggregation_weights(int k, double sigma) {
  std::vector<double> g(static_cast<std::size_t>(k) * k, 1.0);
  if (std::isinf(sigma)) {
    return g;
  }
  if (!(sigma > 0.0)) {
    throw Error("sigma_agg must be positive");
  }
  const int r = k / 2;
  for (int j = 0; j < k * k; ++j) {
    const double dx = j % k - r;
    const double dy = j / k - r;
    g[j] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
  }
  return g;
}

PatchFeature PatchFeatureSet::feature(std::size_t i) const {
  PatchFeature f;
  f.center = centers.at(i);
  f.vector.assign(row(i), row(i) + layout.dim);
  f.example = examples[i];
  f.level = level;
  return f;
}

void PatchFeatureSet::append(const PatchFeatureSet& other) {
  if (size() == 0 && layout.dim == 0) {
    *this = other;
    return;
  }
  if (!(layout == other.layout) || present != other.present) {
    throw Error("cannot append features with a different layout");
  }
  centers.insert(centers.end(), other.centers.begin(), other.centers.end());
  examples.insert(examples.end(), other.examples.begin(), other.examples.end());
  data.insert(data.end(), other.data.begin(), other.data.end());
}

PatchFeatureSet extract_patches(const std::vector<FeatureChannel>& stack, int k,
                                const ExtractOptions& options) {
  const ChannelGrid* first = nullptr;
  for (const auto& c : stack) {
    if (c.grid != nullptr) {
      first = c.grid;
      break;
    }
  }
  if (first == nullptr) {
    throw Error("extract_patches: no channel present");
  }
  return extract_patches(stack, accepted_windows(first->mask(), first->width(), first->height(), k),
                         options);
}

PatchFeatureSet extract_patches(const std::vector<FeatureChannel>& stack,
                                const PatchWindows& windows, const ExtractOptions& options) {
  if (stack.size() + 1 > static_cast<std::size_t>(kMaxSegments)) {
    throw Error("too many channels");
  }
  const int k = windows.k;
  const int kk = k * k;
  PatchFeatureSet out;
  out.level = options.level;
  out.layout.k = k;
  for (std::size_t s = 0; s < stack.size(); ++s) {
    const auto& c = stack[s];
    if (c.grid != nullptr && (c.grid->width() != windows.width || c.grid->height() != windows.height)) {
      throw Error("extract_patches: channel '" + c.name + "' has different dimensions");
    }
    if (!(c.weight >= 0.0)) {
      throw Error("extract_patches: negative weight for '" + c.name + "'");
    }
    if (c.normalization == Normalization::scale_by_ref &&
        (c.scale_ref < 0 || c.scale_ref >= static_cast<int>(s) ||
         stack[c.scale_ref].grid == nullptr)) {
      throw Error("extract_patches: bad scale reference for '" + c.name + "'");
    }
    out.layout.segments.push_back({c.name, out.layout.dim, kk});
    out.layout.dim += kk;
    if (c.grid != nullptr) {
      out.present |= PresenceMask{1} << s;
    }
  }
  out.layout.segments.push_back({"position", out.layout.dim, 2});
  out.layout.dim += 2;
  out.present |= PresenceMask{1} << stack.size();

  const auto g = aggregation_weights(k, options.sigma_agg);
  std::vector<double> sqrt_g(g.size());
  for (std::size_t j = 0; j < g.size(); ++j) {
    sqrt_g[j] = std::sqrt(g[j]);
  }
  const double sqrt_pos = std::sqrt(options.position_weight);
  const std::size_t n = windows.centers.size();
  const int dim = out.layout.dim;
  out.centers = windows.centers;
  out.examples.assign(n, options.example);
  out.data.assign(n * static_cast<std::size_t>(dim), 0.0);

  std::vector<int> src(kk);
  std::vector<double> raw(kk);
  std::vector<double> ref_std(stack.size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const PixelCoord c = windows.centers[i];
    for (int j = 0; j < kk; ++j) {
      src[j] = windows.source_pixel(c, j);
    }
    double* row = out.data.data() + i * static_cast<std::size_t>(dim);
    // Window std of every z-scored channel, for scale_by_ref users.
    for (std::size_t s = 0; s < stack.size(); ++s) {
      const auto& ch = stack[s];
      if (ch.grid == nullptr) {
        continue;
      }
      for (int j = 0; j < kk; ++j) {
        raw[j] = (*ch.grid)[static_cast<std::size_t>(src[j])];
      }
      double scale = 1.0;
      double mean = 0.0;
      bool zero = false;
      if (ch.normalization == Normalization::zscore) {
        for (double v : raw) {
          mean += v;
        }
        mean /= kk;
        double var = 0.0;
        for (double v : raw) {
          var += (v - mean) * (v - mean);
        }
        var /= kk;
        ref_std[s] = std::sqrt(var);
        zero = var < kFlatVariance;
        scale = zero ? 0.0 : 1.0 / ref_std[s];
      } else if (ch.normalization == Normalization::scale_by_ref) {
        const double sd = ref_std[static_cast<std::size_t>(ch.scale_ref)];
        zero = sd * sd < kFlatVariance;
        scale = zero ? 0.0 : 1.0 / sd;
      }
      const double sw = std::sqrt(ch.weight);
      double* seg = row + out.layout.segments[s].offset;
      for (int j = 0; j < kk; ++j) {
        const double v = zero ? 0.0 : (raw[j] - mean) * scale;
        seg[j] = ch.spatial ? v * sw * sqrt_g[j] : v * sw;
      }
    }
    row[dim - 2] = sqrt_pos * (c.x - options.centroid.x);
    row[dim - 1] = sqrt_pos * (c.y - options.centroid.y);
  }
  return out;
}

double feature_distance(const double* a, const double* b, const FeatureLayout& layout,
                        PresenceMask mask, double bound) {
  double sum = 0.0;
  for (std::size_t s = 0; s < layout.segments.size(); ++s) {
    if ((mask >> s & 1u) == 0) {
      continue;
    }
    const Segment& seg = layout.segments[s];
    const double* pa = a + seg.offset;
    const double* pb = b + seg.offset;
    for (int j = 0; j < seg.length; ++j) {
      const double d = pa[j] - pb[j];
      sum += d * d;
    }
    if (sum > bound) {
      return sum;
    }
  }
  return sum;
}

struct PatchIndex::Tree {
  struct Node {
    std::uint32_t begin = 0;
    std::uint32_t end = 0;
    int left = -1;
    int right = -1;
  };
  bool brute = true;
  int dims = 0;
  std::vector<int> cols;
  std::vector<double> mean;
  Eigen::MatrixXd basis;  // cols x dims
  std::vector<double> proj;  // row-major, indexed by original row
  std::vector<std::uint32_t> order;
  std::vector<Node> nodes;
  std::vector<double> lo;
  std::vector<double> hi;
  double abs_slack = 0.0;

  void project(const double* x, double* out) const {
    for (int d = 0; d < dims; ++d) {
      out[d] = 0.0;
    }
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const double v = x[cols[c]] - mean[c];
      for (int d = 0; d < dims; ++d) {
        out[d] += basis(static_cast<Eigen::Index>(c), d) * v;
      }
    }
  }
};

namespace {

constexpr std::size_t kBruteForceBelow = 64;
constexpr std::size_t kPcaSamples = 4096;
constexpr double kRelSlack = 1e-9;

}  // namespace

PatchIndex::PatchIndex(PatchFeatureSet features, SearchOptions options)
    : features_(std::move(features)), options_(options), mutex_(std::make_unique<std::mutex>()) {
  if (features_.size() == 0) {
    throw Error("cannot build an index over zero features");
  }
  if (features_.data.size() != features_.size() * static_cast<std::size_t>(features_.layout.dim)) {
    throw Error("feature matrix size mismatch");
  }
  if (!(options_.eps >= 0.0)) {
    throw Error("eps must be non-negative");
  }
  for (std::size_t i = 0; i < features_.size(); ++i) {
    const int e = features_.examples[i];
    const PixelCoord c = features_.centers[i];
    auto& t = row_tables_[e];
    t.width = std::max(t.width, c.x + 1);
    t.height = std::max(t.height, c.y + 1);
  }
  for (auto& [e, t] : row_tables_) {
    t.rows.assign(static_cast<std::size_t>(t.width) * t.height, -1);
  }
  for (std::size_t i = 0; i < features_.size(); ++i) {
    auto& t = row_tables_[features_.examples[i]];
    const PixelCoord c = features_.centers[i];
    t.rows[static_cast<std::size_t>(c.y) * t.width + c.x] = static_cast<long>(i);
  }
}

PatchIndex::~PatchIndex() = default;
PatchIndex::PatchIndex(PatchIndex&&) noexcept = default;
PatchIndex& PatchIndex::operator=(PatchIndex&&) noexcept = default;

long PatchIndex::row_of(int example, PixelCoord c) const {
  const auto it = row_tables_.find(example);
  if (it == row_tables_.end()) {
    return -1;
  }
  const RowTable& t = it->second;
  if (c.x < 0 || c.y < 0 || c.x >= t.width || c.y >= t.height) {
    return -1;
  }
  return t.rows[static_cast<std::size_t>(c.y) * t.width + c.x];
}

void PatchIndex::prepare(PresenceMask mask) const { tree_for(mask); }

const PatchIndex::Tree& PatchIndex::tree_for(PresenceMask mask) const {
  std::lock_guard<std::mutex> lock(*mutex_);
  auto it = trees_.find(mask);
  if (it != trees_.end()) {
    return *it->second;
  }
  auto tree = std::make_unique<Tree>();
  const std::size_t n = features_.size();
  const auto& layout = features_.layout;
  for (std::size_t s = 0; s < layout.segments.size(); ++s) {
    if (mask >> s & 1u) {
      for (int j = 0; j < layout.segments[s].length; ++j) {
        tree->cols.push_back(layout.segments[s].offset + j);
      }
    }
  }
  tree->brute = options_.brute_force || n < kBruteForceBelow || tree->cols.empty();
  if (!tree->brute) {
    const auto nc = static_cast<Eigen::Index>(tree->cols.size());
    const std::size_t stride = std::max<std::size_t>(1, n / kPcaSamples);
    Eigen::MatrixXd sample;
    {
      std::vector<std::size_t> picks;
      for (std::size_t i = 0; i < n; i += stride) {
        picks.push_back(i);
      }
      sample.resize(static_cast<Eigen::Index>(picks.size()), nc);
      for (std::size_t r = 0; r < picks.size(); ++r) {
        const double* x = features_.row(picks[r]);
        for (Eigen::Index c = 0; c < nc; ++c) {
          sample(static_cast<Eigen::Index>(r), c) = x[tree->cols[c]];
        }
      }
    }
    const Eigen::RowVectorXd mu = sample.colwise().mean();
    sample.rowwise() -= mu;
    const Eigen::MatrixXd cov = sample.transpose() * sample;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    tree->dims = static_cast<int>(std::min<Eigen::Index>(options_.pca_dims, nc));
    // Eigenvalues ascend; keep the trailing (largest) ones, largest first.
    tree->basis = eig.eigenvectors().rightCols(tree->dims).rowwise().reverse();
    tree->mean.assign(mu.data(), mu.data() + nc);

    const int dims = tree->dims;
    tree->proj.assign(n * dims, 0.0);
    constexpr std::size_t kBlock = 2048;
    Eigen::MatrixXd block;
    double max_abs = 0.0;
    for (std::size_t b0 = 0; b0 < n; b0 += kBlock) {
      const std::size_t b1 = std::min(n, b0 + kBlock);
      block.resize(static_cast<Eigen::Index>(b1 - b0), nc);
      for (std::size_t r = b0; r < b1; ++r) {
        const double* x = features_.row(r);
        for (Eigen::Index c = 0; c < nc; ++c) {
          block(static_cast<Eigen::Index>(r - b0), c) = x[tree->cols[c]] - tree->mean[c];
        }
      }
      const Eigen::MatrixXd p = block * tree->basis;
      for (std::size_t r = b0; r < b1; ++r) {
        for (int d = 0; d < dims; ++d) {
          const double v = p(static_cast<Eigen::Index>(r - b0), d);
          tree->proj[r * dims + d] = v;
          max_abs = std::max(max_abs, std::abs(v));
        }
      }
    }
    // Covers rounding in the projection: 2*delta*err <= 1e-9*delta^2 + err^2*1e9.
    tree->abs_slack = 1e-18 * (1.0 + max_abs) * (1.0 + max_abs);

    tree->order.resize(n);
    std::iota(tree->order.begin(), tree->order.end(), 0u);
    tree->nodes.push_back({0, static_cast<std::uint32_t>(n), -1, -1});
    std::vector<int> stack{0};
    const auto leaf_size = static_cast<std::uint32_t>(std::max(1, options_.leaf_size));
    while (!stack.empty()) {
      const int id = stack.back();
      stack.pop_back();
      const std::uint32_t begin = tree->nodes[id].begin;
      const std::uint32_t end = tree->nodes[id].end;
      std::vector<double> lo(dims, std::numeric_limits<double>::infinity());
      std::vector<double> hi(dims, -std::numeric_limits<double>::infinity());
      for (std::uint32_t i = begin; i < end; ++i) {
        const double* p = &tree->proj[static_cast<std::size_t>(tree->order[i]) * dims];
        for (int d = 0; d < dims; ++d) {
          lo[d] = std::min(lo[d], p[d]);
          hi[d] = std::max(hi[d], p[d]);
        }
      }
      const std::size_t base = static_cast<std::size_t>(id) * dims;
      if (tree->lo.size() < base + dims) {
        tree->lo.resize(base + dims);
        tree->hi.resize(base + dims);
      }
      std::copy(lo.begin(), lo.end(), tree->lo.begin() + static_cast<std::ptrdiff_t>(base));
      std::copy(hi.begin(), hi.end(), tree->hi.begin() + static_cast<std::ptrdiff_t>(base));
      if (end - begin <= leaf_size) {
        continue;
      }
      int split = 0;
      for (int d = 1; d < dims; ++d) {
        if (hi[d] - lo[d] > hi[split] - lo[split]) {
          split = d;
        }
      }
      if (!(hi[split] > lo[split])) {
        continue;  // all points coincide
      }
      const std::uint32_t mid = begin + (end - begin) / 2;
      const auto& proj = tree->proj;
      std::nth_element(tree->order.begin() + begin, tree->order.begin() + mid,
                       tree->order.begin() + end, [&](std::uint32_t a, std::uint32_t b) {
                         const double va = proj[static_cast<std::size_t>(a) * dims + split];
                         const double vb = proj[static_cast<std::size_t>(b) * dims + split];
                         return va < vb || (va == vb && a < b);
                       });
      const int left = static_cast<int>(tree->nodes.size());
      tree->nodes.push_back({begin, mid, -1, -1});
      tree->nodes.push_back({mid, end, -1, -1});
      tree->nodes[id].left = left;
      tree->nodes[id].right = left + 1;
      stack.push_back(left + 1);
      stack.push_back(left);
    }
  }
  const Tree& ref = *tree;
  trees_.emplace(mask, std::move(tree));
  return ref;
}

PatchQueryResult PatchIndex::result_for(std::size_t row, double distance) const {
  return {features_.examples[row], features_.centers[row], distance, row};
}

namespace {

struct Best {
  double distance = std::numeric_limits<double>::infinity();
  long row = -1;
};

}  // namespace

PatchQueryResult PatchIndex::brute_force(const double* q, PresenceMask mask) const {
  const auto& f = features_;
  Best best;
  auto key = [&](std::size_t r) { return std::tuple(f.examples[r], f.centers[r].y, f.centers[r].x); };
  for (std::size_t r = 0; r < f.size(); ++r) {
    const double d = feature_distance(q, f.row(r), f.layout, mask, best.distance);
    if (d < best.distance || (d == best.distance && key(r) < key(static_cast<std::size_t>(best.row)))) {
      best = {d, static_cast<long>(r)};
    }
  }
  return result_for(static_cast<std::size_t>(best.row), best.distance);
}

PatchQueryResult PatchIndex::query(const double* q, PresenceMask mask,
                                   std::span<const std::size_t> hints) const {
  const Tree& tree = tree_for(mask);
  if (tree.brute) {
    return brute_force(q, mask);
  }
  const auto& f = features_;
  Best best;
  auto key = [&](std::size_t r) { return std::tuple(f.examples[r], f.centers[r].y, f.centers[r].x); };
  auto consider = [&](std::size_t r) {
    const double d = feature_distance(q, f.row(r), f.layout, mask, best.distance);
    if (d < best.distance ||
        (d == best.distance && best.row >= 0 && key(r) < key(static_cast<std::size_t>(best.row)))) {
      best = {d, static_cast<long>(r)};
    }
  };
  for (std::size_t h : hints) {
    if (h < f.size()) {
      consider(h);
    }
  }
  const int dims = tree.dims;
  std::vector<double> pq(dims);
  tree.project(q, pq.data());
  double qmax = 0.0;
  for (double v : pq) {
    qmax = std::max(qmax, std::abs(v));
  }
  const double abs_slack = std::max(tree.abs_slack, 1e-18 * (1.0 + qmax) * (1.0 + qmax));
  const double shrink = (1.0 + kRelSlack) / (1.0 + options_.eps);
  auto threshold = [&] { return best.distance * shrink + abs_slack; };
  auto box_lb = [&](int node) {
    const double* lo = &tree.lo[static_cast<std::size_t>(node) * dims];
    const double* hi = &tree.hi[static_cast<std::size_t>(node) * dims];
    double s = 0.0;
    for (int d = 0; d < dims; ++d) {
      const double v = pq[d] < lo[d] ? lo[d] - pq[d] : (pq[d] > hi[d] ? pq[d] - hi[d] : 0.0);
      s += v * v;
    }
    return s;
  };
  auto visit = [&](auto&& self, int node, double lb) -> void {
    if (lb > threshold()) {
      return;
    }
    const auto& nd = tree.nodes[node];
    if (nd.left < 0) {
      for (std::uint32_t i = nd.begin; i < nd.end; ++i) {
        const std::uint32_t r = tree.order[i];
        const double* p = &tree.proj[static_cast<std::size_t>(r) * dims];
        double s = 0.0;
        const double t = threshold();
        for (int d = 0; d < dims && s <= t; ++d) {
          const double v = pq[d] - p[d];
          s += v * v;
        }
        if (s > t) {
          continue;
        }
        consider(r);
      }
      return;
    }
    const double lb_left = box_lb(nd.left);
    const double lb_right = box_lb(nd.right);
    if (lb_left <= lb_right) {
      self(self, nd.left, lb_left);
      self(self, nd.right, lb_right);
    } else {
      self(self, nd.right, lb_right);
      self(self, nd.left, lb_left);
    }
  };
  visit(visit, 0, box_lb(0));
  return result_for(static_cast<std::size_t>(best.row), best.distance);
}

PatchIndex build_index(PatchFeatureSet features, SearchOptions options) {
  return PatchIndex(std::move(features), options);
}

PatchIndex build_index(const std::vector<PatchFeature>& features, SearchOptions options) {
  if (features.empty()) {
    throw Error("cannot build an index over zero features");
  }
  const std::size_t len = features.front().vector.size();
  PatchFeatureSet set;
  set.layout.k = 0;
  set.layout.dim = static_cast<int>(len);
  set.layout.segments.push_back({"vector", 0, static_cast<int>(len)});
  set.present = 1;
  set.level = features.front().level;
  for (const auto& f : features) {
    if (f.vector.size() != len) {
      throw Error("mixed feature vector lengths");
    }
    set.centers.push_back(f.center);
    set.examples.push_back(f.example);
    set.data.insert(set.data.end(), f.vector.begin(), f.vector.end());
  }
  return PatchIndex(std::move(set), options);
}

PatchQueryResult query_nearest(const PatchIndex& index, const PatchFeature& q) {
  if (q.vector.size() != static_cast<std::size_t>(index.features().layout.dim)) {
    throw Error("query length " + std::to_string(q.vector.size()) + " does not match index dimension " +
                std::to_string(index.features().layout.dim));
  }
  return index.query(q.vector.data(), all_present(index.features().layout));
}

}  // namespace depthsynth
