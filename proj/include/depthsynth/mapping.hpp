#pragma once

#include <cstddef>
#include <initializer_list>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "depthsynth/grid.hpp"

namespace depthsynth {

/// Camera angles in degrees: alpha is azimuth, beta is elevation.
struct ViewAngles {
  double alpha = 0.0;
  double beta = 0.0;
  friend bool operator==(const ViewAngles&, const ViewAngles&) = default;
};

double angular_distance(const ViewAngles& a, const ViewAngles& b);

/// Throws unless alpha lies in [-180, 180) and beta in [-90, 90].
void validate_view(const ViewAngles& v);

struct NamedChannel {
  std::string name;
  ChannelGrid grid;
};

/// One exemplar object at one view: an aligned stack of named channels.
///
/// Which channels act as source and which as target is decided by the
/// database schema, so one rendered exemplar serves every mode.
struct MappingExample {
  std::string object_id;
  ViewAngles view;
  std::vector<NamedChannel> channels;
  std::size_t usage_count = 0;

  const ChannelGrid* find(const std::string& name) const;
  const ChannelGrid& channel(const std::string& name) const;
  const Mask& mask() const;
  int width() const;
  int height() const;
};

/// Throws unless every channel shares the dimensions and mask of the first and
/// the view is valid.
void validate_example(const MappingExample& example);

struct ChannelSchema {
  std::vector<std::string> sources;
  std::vector<std::string> targets;
};

/// Pool of exemplars with an active subset used by the synthesis.
class ExampleDatabase {
 public:
  ExampleDatabase(ChannelSchema schema, std::vector<MappingExample> examples,
                  std::size_t active_limit);

  const ChannelSchema& schema() const { return schema_; }
  std::size_t active_limit() const { return active_limit_; }

  std::size_t size() const { return examples_.size(); }
  const MappingExample& example(std::size_t i) const { return examples_.at(i); }
  const std::vector<MappingExample>& examples() const { return examples_; }

  const std::vector<std::size_t>& active() const { return active_; }
  /// Replaces the active subset; indices are sorted and must be unique.
  void set_active(std::vector<std::size_t> indices);

  void reset_usage();
  void add_usage(std::size_t example, std::size_t count) { examples_.at(example).usage_count += count; }

  /// Ordered unique object ids in the pool.
  std::vector<std::string> object_ids() const;
  /// Pool indices of an object's examples.
  std::vector<std::size_t> examples_of(const std::string& object_id) const;
  std::optional<std::size_t> find(const std::string& object_id, const ViewAngles& view) const;

 private:
  ChannelSchema schema_;
  std::vector<MappingExample> examples_;
  std::vector<std::size_t> active_;
  std::size_t active_limit_;
};

/// Per-channel non-negative weights (the diagonal of the patch covariance),
/// including the "position" pseudo-channel.
class ChannelWeights {
 public:
  ChannelWeights() = default;
  ChannelWeights(std::initializer_list<std::pair<std::string, double>> entries);
  explicit ChannelWeights(std::vector<std::pair<std::string, double>> entries);

  /// Weight for `name`, falling back to `fallback` when `name` is absent.
  double get(const std::string& name, const std::string& fallback = {}) const;
  bool contains(const std::string& name) const;
  void set(const std::string& name, double value);

  const std::vector<std::pair<std::string, double>>& entries() const { return entries_; }
  std::vector<double> values() const;
  /// Same names, new values (in order).
  ChannelWeights with_values(const std::vector<double>& values) const;
  std::string to_string() const;

 private:
  void validate() const;
  std::vector<std::pair<std::string, double>> entries_;
};

}  // namespace depthsynth
