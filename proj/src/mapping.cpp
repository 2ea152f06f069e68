#include "depthsynth/mapping.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace depthsynth {

double angular_distance(const ViewAngles& a, const ViewAngles& b) {
  return std::hypot(a.alpha - b.alpha, a.beta - b.beta);
}

void validate_view(const ViewAngles& v) {
  if (!(v.alpha >= -180.0 && v.alpha < 180.0 && v.beta >= -90.0 && v.beta <= 90.0)) {
    throw Error("view angles out of range");
  }
}

const ChannelGrid* MappingExample::find(const std::string& name) const {
  for (const auto& c : channels) {
    if (c.name == name) {
      return &c.grid;
    }
  }
  return nullptr;
}

const ChannelGrid& MappingExample::channel(const std::string& name) const {
  const ChannelGrid* g = find(name);
  if (g == nullptr) {
    throw Error("example " + object_id + " has no channel '" + name + "'");
  }
  return *g;
}

const Mask& MappingExample::mask() const {
  if (channels.empty()) {
    throw Error("example " + object_id + " has no channels");
  }
  return channels.front().grid.mask();
}

int MappingExample::width() const { return channels.at(0).grid.width(); }
int MappingExample::height() const { return channels.at(0).grid.height(); }

void validate_example(const MappingExample& example) {
  validate_view(example.view);
  if (example.channels.empty()) {
    throw Error("example " + example.object_id + " has no channels");
  }
  const ChannelGrid& first = example.channels.front().grid;
  for (const auto& c : example.channels) {
    if (!c.grid.same_mask(first)) {
      throw Error("example " + example.object_id + ": channel '" + c.name +
                  "' differs in dimensions or mask");
    }
  }
}

ExampleDatabase::ExampleDatabase(ChannelSchema schema, std::vector<MappingExample> examples,
                                 std::size_t active_limit)
    : schema_(std::move(schema)), examples_(std::move(examples)), active_limit_(active_limit) {
  if (active_limit_ == 0) {
    throw Error("active_limit must be positive");
  }
  for (const auto& e : examples_) {
    validate_example(e);
    for (const auto& name : schema_.sources) {
      if (e.find(name) == nullptr) {
        throw Error("schema mismatch: example " + e.object_id + " lacks source '" + name + "'");
      }
    }
    for (const auto& name : schema_.targets) {
      if (e.find(name) == nullptr) {
        throw Error("schema mismatch: example " + e.object_id + " lacks target '" + name + "'");
      }
    }
  }
  std::vector<std::size_t> initial;
  for (std::size_t i = 0; i < examples_.size() && i < active_limit_; ++i) {
    initial.push_back(i);
  }
  set_active(std::move(initial));
}

void ExampleDatabase::set_active(std::vector<std::size_t> indices) {
  std::sort(indices.begin(), indices.end());
  if (std::adjacent_find(indices.begin(), indices.end()) != indices.end()) {
    throw Error("active set contains duplicates");
  }
  if (indices.size() > active_limit_) {
    throw Error("active set exceeds active_limit");
  }
  for (std::size_t i : indices) {
    if (i >= examples_.size()) {
      throw Error("active index out of range");
    }
  }
  active_ = std::move(indices);
}

void ExampleDatabase::reset_usage() {
  for (auto& e : examples_) {
    e.usage_count = 0;
  }
}

std::vector<std::string> ExampleDatabase::object_ids() const {
  std::set<std::string> ids;
  for (const auto& e : examples_) {
    ids.insert(e.object_id);
  }
  return {ids.begin(), ids.end()};
}

std::vector<std::size_t> ExampleDatabase::examples_of(const std::string& object_id) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < examples_.size(); ++i) {
    if (examples_[i].object_id == object_id) {
      out.push_back(i);
    }
  }
  return out;
}

std::optional<std::size_t> ExampleDatabase::find(const std::string& object_id,
                                                 const ViewAngles& view) const {
  for (std::size_t i = 0; i < examples_.size(); ++i) {
    if (examples_[i].object_id == object_id && examples_[i].view == view) {
      return i;
    }
  }
  return std::nullopt;
}

ChannelWeights::ChannelWeights(std::initializer_list<std::pair<std::string, double>> entries)
    : entries_(entries) {
  validate();
}

ChannelWeights::ChannelWeights(std::vector<std::pair<std::string, double>> entries)
    : entries_(std::move(entries)) {
  validate();
}

void ChannelWeights::validate() const {
  bool any_positive = false;
  for (const auto& [name, w] : entries_) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw Error("channel weight '" + name + "' must be finite and non-negative");
    }
    any_positive = any_positive || w > 0.0;
  }
  if (!entries_.empty() && !any_positive) {
    throw Error("at least one channel weight must be positive");
  }
}

double ChannelWeights::get(const std::string& name, const std::string& fallback) const {
  for (const auto& [n, w] : entries_) {
    if (n == name) {
      return w;
    }
  }
  if (!fallback.empty()) {
    return get(fallback);
  }
  throw Error("no weight for channel '" + name + "'");
}

bool ChannelWeights::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const auto& e) { return e.first == name; });
}

void ChannelWeights::set(const std::string& name, double value) {
  for (auto& [n, w] : entries_) {
    if (n == name) {
      w = value;
      validate();
      return;
    }
  }
  entries_.emplace_back(name, value);
  validate();
}

std::vector<double> ChannelWeights::values() const {
  std::vector<double> out;
  for (const auto& e : entries_) {
    out.push_back(e.second);
  }
  return out;
}

ChannelWeights ChannelWeights::with_values(const std::vector<double>& values) const {
  if (values.size() != entries_.size()) {
    throw Error("expected " + std::to_string(entries_.size()) + " weights, got " +
                std::to_string(values.size()));
  }
  std::vector<std::pair<std::string, double>> out = entries_;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i].second = values[i];
  }
  return ChannelWeights(std::move(out));
}

std::string ChannelWeights::to_string() const {
  std::ostringstream os;
  os.precision(6);
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    os << (i ? "," : "") << entries_[i].first << "=" << entries_[i].second;
  }
  return os.str();
}

}  // namespace depthsynth
