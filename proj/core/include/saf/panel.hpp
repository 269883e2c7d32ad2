#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "saf/sample.hpp"
#include "saf/tensor.hpp"

namespace saf {

/// Fired once per (entity, time index) row the data pipeline reads.
/// Tests install one per pipeline phase to prove which split each phase
/// touched; an empty observer costs nothing.
using AccessObserver = std::function<void(std::size_t entity, std::size_t t)>;

/// One entity's series: strictly increasing integer timestamps, a
/// rows x features value matrix, and an optional static vector.
struct PanelEntity {
    std::string id;
    std::vector<std::int64_t> timestamps;
    Tensor values;   // rows x features
    Tensor statics;  // static feature vector, empty when the panel has none
};

/// Multi-entity panel with one shared feature schema.  Immutable once
/// built; every transformation returns a new dataset.
struct PanelDataset {
    std::vector<std::string> feature_names;
    std::size_t target_column = 0;
    std::vector<std::string> static_names;
    std::string frequency;  // informational sampling label, e.g. "steps"
    std::vector<PanelEntity> entities;

    std::size_t feature_count() const { return feature_names.size(); }

    /// Schema agreement: every entity matches the feature and static
    /// counts, timestamps strictly increase, target_column in range.
    /// Throws ContractError on violation.
    void validate() const;

    /// The series length shared by all entities.  Split arithmetic needs
    /// one common clock; differing lengths throw ContractError.
    std::size_t common_length() const;
};

/// Half-open index range [begin, end) on the shared time axis.
struct TimeRange {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t length() const { return end - begin; }
};

/// Temporal split by trailing validation and test durations; everything
/// before them is training.
struct SplitSpec {
    std::size_t validation = 100;
    std::size_t test = 100;
};

struct PanelSplits {
    TimeRange train;
    TimeRange validation;
    TimeRange test;
};

/// total=300, val=100, test=100 -> train [0,100), validation [100,200),
/// test [200,300).  Every range must be non-empty; ConfigError otherwise.
PanelSplits split_ranges(std::size_t total, const SplitSpec& spec);

/// How z-scoring statistics are shared across entities.  Global averages
/// the per-entity statistics (one scale for the whole panel); PerEntity
/// keeps each entity's own.
enum class NormalizationMode : std::uint8_t { Global = 1, PerEntity };

const char* normalization_mode_name(NormalizationMode mode);
NormalizationMode normalization_mode_from_name(const std::string& name);

struct FeatureScale {
    double mean = 0.0;
    double scale = 1.0;  // population std; reset to 1 for constant features
    bool degenerate = false;
};

/// Fitted z-scoring statistics plus the warnings raised while fitting.
/// Statistics are computed ONLY from the fitting range, so the record is
/// safe to reuse on validation and test data.
struct NormalizationStats {
    NormalizationMode mode = NormalizationMode::Global;
    /// Global mode: one entry.  PerEntity: one per entity, dataset order.
    std::vector<std::vector<FeatureScale>> scales;
    std::vector<std::string> warnings;

    const FeatureScale& for_feature(std::size_t entity, std::size_t feature) const;
};

/// Population mean/std per time-varying feature over `range`.  Static
/// features pass through normalization untouched (they are caller-scaled
/// side information).  Constant features get unit scale and a warning.
NormalizationStats fit_normalization(const PanelDataset& data, const TimeRange& range,
                                     NormalizationMode mode,
                                     const AccessObserver& observer = {});

/// (value - mean) / scale applied to every time-varying cell.
PanelDataset apply_normalization(const PanelDataset& data, const NormalizationStats& stats);

/// Undo the target feature's z-scoring for one value.
double denormalize_target(const NormalizationStats& stats, std::size_t entity,
                          std::size_t target_column, double value);

struct WindowBuild {
    std::vector<WindowSample> samples;
    std::vector<std::string> warnings;
};

/// One sample per entity per anchor t: inputs are rows [t-m+1, t] of every
/// time-varying feature, targets the target feature at [t+1, t+h].  Every
/// anchor whose targets lie inside `targets_in` (stepped by `stride`)
/// yields a sample.  borrow_context=false confines the input window to the
/// range as well (training); true lets evaluation windows reach back into
/// earlier history while targets stay inside the range.  A range too short
/// to fit any sample yields an empty collection plus a warning.
WindowBuild make_windows(const PanelDataset& data, const TimeRange& targets_in,
                         std::size_t window, std::size_t horizon, bool borrow_context,
                         std::size_t stride = 1, const AccessObserver& observer = {});

/// Sidecar descriptor naming the forecast target within the CSV schema.
struct PanelSchema {
    std::string target;
    std::string frequency;     // optional label
    bool forward_fill = false; // blank cells: repeat previous value vs reject
};

/// Reads the JSON sidecar: {"target": <feature>, "frequency"?: <label>,
/// "forward_fill"?: <bool>}.  Unknown keys are rejected.
PanelSchema load_schema(const std::string& path);

/// Panel CSV: header `entity_id,timestamp,<feature...>`, one row per
/// (entity, step); static CSV: header `entity_id,<static...>`, one row per
/// entity covering every panel entity.  Timestamps are integers, strictly
/// increasing within an entity in file order; entities keep first-seen
/// order.  Malformed input raises ParseError naming file and line.
/// static_path may be empty when the panel has no static features.
PanelDataset load_csv(const std::string& panel_path, const std::string& static_path,
                      const PanelSchema& schema);

/// Inverse of load_csv on well-formed data; atomic, full round-trip
/// precision.  static_path may be empty when there are no statics.
void save_csv(const PanelDataset& data, const std::string& panel_path,
              const std::string& static_path);

} // namespace saf
