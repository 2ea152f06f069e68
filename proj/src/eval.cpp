#include "depthsynth/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>
#include <gsl/gsl_errno.h>
#include <gsl/gsl_multimin.h>
#include <nlohmann/json.hpp>

#include "depthsynth/exemplar_update.hpp"
#include "depthsynth/parallel.hpp"

namespace depthsynth {

double l1_error(const ChannelGrid& estimate, const ChannelGrid& truth) {
  if (!estimate.same_shape(truth)) {
    throw Error("l1_error: grids differ in size");
  }
  if (truth.foreground_count() == 0 || estimate.foreground_count() == 0) {
    throw Error("l1_error: empty foreground");
  }
  const ChannelGrid t = normalize_depth_frame(truth).grid;
  const ChannelGrid e = normalize_depth_frame(remask(estimate, truth.mask())).grid;
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t.foreground(i)) {
      sum += std::abs(e[i] - t[i]);
      ++n;
    }
  }
  const double range = foreground_range(truth);
  const double mean = sum / static_cast<double>(n);
  return range > 0.0 ? mean / range : mean;
}

namespace {

double source_distance(const std::string& source, const ChannelGrid& query, const ChannelGrid& example) {
  if (source == "depth") {
    return aligned_residual(query, example);
  }
  return appearance_distance(query, example);
}

}  // namespace

std::size_t baseline_choice(const ChannelGrid& query_source, const ExampleDatabase& db,
                            const std::vector<std::size_t>& candidates) {
  if (db.size() == 0) {
    throw Error("baseline needs a non-empty database");
  }
  std::vector<std::size_t> pool = candidates;
  if (pool.empty()) {
    pool.resize(db.size());
    std::iota(pool.begin(), pool.end(), std::size_t{0});
  }
  std::sort(pool.begin(), pool.end());
  const std::string& source = db.schema().sources.front();
  std::size_t best = pool.front();
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i : pool) {
    const double d = source_distance(source, query_source, db.example(i).channel(source));
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

DepthMap baseline_estimate(const ChannelGrid& query_source, const ExampleDatabase& db,
                           const std::vector<std::size_t>& candidates) {
  const std::size_t pick = baseline_choice(query_source, db, candidates);
  const MappingExample& e = db.example(pick);
  const ChannelGrid& target = e.channel(db.schema().targets.front());
  const Point2 cq = foreground_centroid(query_source);
  const Point2 ce = foreground_centroid(target);
  ChannelGrid moved = translated(target, static_cast<int>(std::lround(cq.x - ce.x)),
                                 static_cast<int>(std::lround(cq.y - ce.y)));
  if (moved.foreground_count() == 0) {
    moved = target;
  }
  return normalize_depth_frame(remask(moved, query_source.mask()));
}

TTest paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw Error("paired t-test needs equal lengths");
  }
  if (a.size() < 2) {
    throw Error("paired t-test needs at least two pairs");
  }
  const std::size_t n = a.size();
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mean += a[i] - b[i];
  }
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i] - mean;
    ss += d * d;
  }
  TTest out;
  out.dof = n - 1;
  const double var = ss / static_cast<double>(n - 1);
  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
  }
  // Spread at rounding level counts as none.
  if (!(std::sqrt(var) > 1e-12 * scale)) {
    if (std::abs(mean) <= 1e-12 * scale) {
      out.t = 0.0;
      out.p = 1.0;
      out.warning = "zero difference variance; the samples are identical";
    } else {
      out.t = mean > 0.0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
      out.p = 0.0;
      out.warning = "zero difference variance; constant offset";
    }
    return out;
  }
  out.t = mean / std::sqrt(var / static_cast<double>(n));
  boost::math::students_t dist(static_cast<double>(out.dof));
  out.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(out.t)));
  return out;
}

namespace {

std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) {
    return {0.0, 0.0};
  }
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  if (v.size() < 2) {
    return {m, 0.0};
  }
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

}  // namespace

std::string EvalReport::to_csv() const {
  std::ostringstream os;
  os << "# " << config << "\n";
  os << "kind,object_id,alpha,beta,method_l1,baseline_l1\n";
  for (const auto& q : queries) {
    os << "query," << q.object_id << "," << num(q.view.alpha) << "," << num(q.view.beta) << ","
       << num(q.method_l1) << "," << num(q.baseline_l1) << "\n";
  }
  os << "mean,,,," << num(method_mean) << "," << num(baseline_mean) << "\n";
  os << "std,,,," << num(method_std) << "," << num(baseline_std) << "\n";
  os << "ttest,,,," << num(ttest.t) << "," << num(ttest.p) << "\n";
  return os.str();
}

std::string EvalReport::to_table() const {
  std::vector<std::string> labels;
  std::size_t width = 12;
  for (const auto& q : queries) {
    std::ostringstream id;
    id << q.object_id << " @" << q.view.alpha << "," << q.view.beta;
    labels.push_back(id.str());
    width = std::max(width, labels.back().size() + 2);
  }
  const int w = static_cast<int>(width);
  auto cell = [](double mean, double sd) {
    std::ostringstream c;
    c << std::fixed << std::setprecision(3) << mean << " +- " << sd;
    return c.str();
  };
  std::ostringstream os;
  os << "config: " << config << "\n";
  os << std::left << std::setw(w) << "query" << std::right << std::setw(16) << "Baseline" << std::setw(16)
     << "Ours" << "\n";
  os << std::fixed << std::setprecision(4);
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const auto& q = queries[i];
    os << std::left << std::setw(w) << labels[i] << std::right << std::setw(16) << q.baseline_l1
       << std::setw(16) << q.method_l1 << (q.converged ? "" : "  (not converged)") << "\n";
  }
  os << std::left << std::setw(w) << "mean +- std" << std::right << std::setw(16) << cell(baseline_mean, baseline_std)
     << std::setw(16) << cell(method_mean, method_std) << "\n";
  os << std::defaultfloat << std::setprecision(4) << "paired t = " << ttest.t << ", p = " << ttest.p
     << " (n = " << queries.size() << ")";
  if (!ttest.warning.empty()) {
    os << " warning: " << ttest.warning;
  }
  os << "\n";
  return os.str();
}

EvalReport leave_one_out(const std::vector<MappingExample>& pool, const EvalOptions& options) {
  const ModeSpec spec = mode_spec(options.mode);
  std::set<std::string> objects;
  for (const auto& e : pool) {
    objects.insert(e.object_id);
  }
  if (objects.size() < 3) {
    throw Error("leave-one-out needs at least three objects");
  }
  std::vector<std::size_t> queries;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const auto& e = pool[i];
    if (!options.query_objects.empty() &&
        std::find(options.query_objects.begin(), options.query_objects.end(), e.object_id) ==
            options.query_objects.end()) {
      continue;
    }
    if (!options.query_views.empty() &&
        std::find(options.query_views.begin(), options.query_views.end(), e.view) == options.query_views.end()) {
      continue;
    }
    queries.push_back(i);
  }
  if (queries.empty()) {
    throw Error("no query matches the filters");
  }
  std::sort(queries.begin(), queries.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = pool[a];
    const auto& y = pool[b];
    return std::tie(x.object_id, x.view.alpha, x.view.beta) < std::tie(y.object_id, y.view.alpha, y.view.beta);
  });

  EvalReport report;
  report.mode = mode_name(options.mode);
  report.config = config_snapshot(spec, options.run, options.active_limit);
  report.queries.resize(queries.size());
  const std::string& source = spec.schema.sources.front();
  const std::string& target = spec.schema.targets.front();
  parallel_for(queries.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t q = begin; q < end; ++q) {
      const MappingExample& held = pool[queries[q]];
      std::vector<MappingExample> rest;
      for (const auto& e : pool) {
        if (e.object_id != held.object_id) {
          rest.push_back(e);
        }
      }
      ExampleDatabase db = make_database(spec, std::move(rest), options.active_limit);
      std::vector<NamedChannel> query;
      for (const auto& s : spec.schema.sources) {
        query.push_back({s, held.channel(s)});
      }
      const ModeResult result = run_mode(spec, query, db, options.run);
      QueryRecord& r = report.queries[q];
      r.object_id = held.object_id;
      r.view = held.view;
      r.method_l1 = l1_error(result.output(target), held.channel(target));
      r.baseline_l1 = l1_error(baseline_estimate(held.channel(source), db).grid, held.channel(target));
      r.converged = result.synthesis.converged;
      r.updates = static_cast<std::size_t>(
          std::count_if(result.updates.begin(), result.updates.end(), [](const UpdateEvent& e) { return e.changed; }));
    }
  });
  std::vector<double> method, baseline;
  for (const auto& r : report.queries) {
    method.push_back(r.method_l1);
    baseline.push_back(r.baseline_l1);
  }
  std::tie(report.method_mean, report.method_std) = mean_std(method);
  std::tie(report.baseline_mean, report.baseline_std) = mean_std(baseline);
  if (method.size() >= 2) {
    report.ttest = paired_t_test(method, baseline);
  } else {
    report.ttest.warning = "a single query gives no t-test";
  }
  return report;
}

namespace {

constexpr double kLogClamp = 30.0;

struct SearchState {
  const ChannelWeights* init = nullptr;
  std::vector<std::size_t> free;
  const WeightObjective* objective = nullptr;
  int evaluations = 0;
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> best_values;
  std::set<double> seen;

  std::vector<double> to_values(const gsl_vector* x) const {
    std::vector<double> v = init->values();
    for (std::size_t i = 0; i < free.size(); ++i) {
      v[free[i]] = std::exp(std::clamp(gsl_vector_get(x, i), -kLogClamp, kLogClamp));
    }
    return v;
  }
};

double simplex_objective(const gsl_vector* x, void* params) {
  auto* st = static_cast<SearchState*>(params);
  const std::vector<double> v = st->to_values(x);
  const double f = (*st->objective)(st->init->with_values(v));
  ++st->evaluations;
  st->seen.insert(f);
  if (f < st->best) {
    st->best = f;
    st->best_values = v;
  }
  return std::isfinite(f) ? f : std::numeric_limits<double>::max();
}

}  // namespace

WeightSearchResult search_weights(const ChannelWeights& init, const WeightObjective& objective,
                                  const WeightSearchOptions& options) {
  if (options.max_evals < 1) {
    throw Error("max_evals must be positive");
  }
  SearchState st;
  st.init = &init;
  st.objective = &objective;
  const std::vector<double> start = init.values();
  for (std::size_t i = 0; i < start.size(); ++i) {
    if (start[i] > 0.0) {
      st.free.push_back(i);
    }
  }
  WeightSearchResult out;
  out.weights = init;
  if (st.free.empty()) {
    out.objective = objective(init);
    out.evaluations = 1;
    return out;
  }
  const std::size_t n = st.free.size();
  gsl_set_error_handler_off();
  gsl_vector* x = gsl_vector_alloc(n);
  gsl_vector* step = gsl_vector_alloc(n);
  for (std::size_t i = 0; i < n; ++i) {
    gsl_vector_set(x, i, std::log(start[st.free[i]]));
    gsl_vector_set(step, i, options.initial_step);
  }
  gsl_multimin_function fn{&simplex_objective, n, &st};
  gsl_multimin_fminimizer* s = gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, n);
  const double init_f = objective(init);
  gsl_multimin_fminimizer_set(s, &fn, x, step);
  while (st.evaluations < options.max_evals) {
    if (gsl_multimin_fminimizer_iterate(s) != GSL_SUCCESS) {
      break;
    }
    if (gsl_multimin_test_size(gsl_multimin_fminimizer_size(s), options.size_tolerance) == GSL_SUCCESS) {
      out.converged = true;
      break;
    }
  }
  gsl_multimin_fminimizer_free(s);
  gsl_vector_free(step);
  gsl_vector_free(x);
  out.evaluations = st.evaluations + 1;
  st.seen.insert(init_f);
  if (st.seen.size() <= 1 || !(st.best < init_f)) {
    out.weights = init;
    out.objective = init_f;
    return out;
  }
  out.weights = init.with_values(st.best_values);
  out.objective = st.best;
  return out;
}

WeightSearchResult search_weights(const std::vector<MappingExample>& training, const ChannelWeights& init,
                                  const EvalOptions& eval, const WeightSearchOptions& options) {
  std::set<std::string> objects;
  for (const auto& e : training) {
    objects.insert(e.object_id);
  }
  if (objects.size() < 3) {
    throw Error("weight search needs at least three training objects");
  }
  return search_weights(
      init,
      [&](const ChannelWeights& w) {
        EvalOptions o = eval;
        o.run.weights = w;
        return leave_one_out(training, o).method_mean;
      },
      options);
}

WeightCache::WeightCache(std::filesystem::path file) : file_(std::move(file)) {
  if (!std::filesystem::exists(file_)) {
    return;
  }
  std::ifstream in(file_);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error("bad weight cache " + file_.string() + ": " + e.what());
  }
  for (const auto& [key, value] : j.items()) {
    std::vector<std::pair<std::string, double>> entries;
    for (const auto& item : value) {
      entries.emplace_back(item.at(0).get<std::string>(), item.at(1).get<double>());
    }
    entries_[key] = ChannelWeights(std::move(entries));
  }
}

const ChannelWeights& WeightCache::get(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) {
    throw Error("no cached weights for '" + key + "'");
  }
  return it->second;
}

void WeightCache::put(const std::string& key, const ChannelWeights& weights) {
  entries_[key] = weights;
  save();
}

ChannelWeights WeightCache::get_or_search(const std::string& key, const std::function<ChannelWeights()>& search) {
  if (!contains(key)) {
    put(key, search());
  }
  return get(key);
}

void WeightCache::save() const {
  if (file_.empty()) {
    return;
  }
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [key, w] : entries_) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& [name, value] : w.entries()) {
      arr.push_back({name, value});
    }
    j[key] = arr;
  }
  std::ofstream out(file_);
  if (!out) {
    throw Error("cannot write " + file_.string());
  }
  out << j.dump(2) << "\n";
}

}  // namespace depthsynth
