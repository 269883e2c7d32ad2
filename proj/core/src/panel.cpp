#include "saf/panel.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <set>

#include <json.hpp>

#include "saf/error.hpp"
#include "saf/io.hpp"

namespace saf {

namespace {

std::string at_line(const std::string& path, std::size_t line) {
    return path + ":" + std::to_string(line) + ": ";
}

// Comma split with no quoting: the documented schema forbids commas,
// quotes, and line breaks inside fields.
std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            fields.push_back(line.substr(start));
            return fields;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t nl = text.find('\n', start);
        std::size_t end = nl == std::string::npos ? text.size() : nl;
        std::size_t len = end - start;
        if (len > 0 && text[start + len - 1] == '\r') --len;  // tolerate CRLF
        lines.push_back(text.substr(start, len));
        if (nl == std::string::npos) break;
        start = nl + 1;
    }
    return lines;
}

double parse_double(const std::string& field, const std::string& path, std::size_t line) {
    const char* s = field.c_str();
    char* end = nullptr;
    errno = 0;
    double v = std::strtod(s, &end);
    if (end == s || *end != '\0')
        throw ParseError(at_line(path, line) + "not a number: '" + field + "'");
    if (!std::isfinite(v))
        throw ParseError(at_line(path, line) + "non-finite value: '" + field + "'");
    return v;
}

std::int64_t parse_timestamp(const std::string& field, const std::string& path,
                             std::size_t line) {
    const char* s = field.c_str();
    char* end = nullptr;
    errno = 0;
    long long v = std::strtoll(s, &end, 10);
    if (end == s || *end != '\0' || errno == ERANGE)
        throw ParseError(at_line(path, line) + "not an integer timestamp: '" + field + "'");
    return static_cast<std::int64_t>(v);
}

void check_field_text(const std::string& text, const char* what) {
    if (text.empty()) throw ContractError(std::string(what) + " must not be empty");
    if (text.find_first_of(",\"\n\r") != std::string::npos)
        throw ContractError(std::string(what) + " '" + text +
                            "' contains a comma, quote, or line break");
}

std::string format_value(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

void PanelDataset::validate() const {
    if (feature_names.empty()) throw ContractError("panel declares no features");
    if (target_column >= feature_names.size())
        throw ContractError("panel target column out of range");
    std::set<std::string> seen(feature_names.begin(), feature_names.end());
    if (seen.size() != feature_names.size())
        throw ContractError("panel feature names are not unique");
    if (entities.empty()) throw ContractError("panel has no entities");

    for (const PanelEntity& e : entities) {
        if (e.id.empty()) throw ContractError("panel entity with empty id");
        if (e.values.rank() != 2 || e.values.cols() != feature_names.size() ||
            e.values.rows() != e.timestamps.size())
            throw ContractError("entity '" + e.id + "' value matrix does not match schema");
        std::size_t want_statics = static_names.size();
        if (e.statics.size() != want_statics)
            throw ContractError("entity '" + e.id + "' static vector does not match schema");
        for (std::size_t t = 1; t < e.timestamps.size(); ++t)
            if (e.timestamps[t] <= e.timestamps[t - 1])
                throw ContractError("entity '" + e.id + "' timestamps do not strictly increase");
    }
}

std::size_t PanelDataset::common_length() const {
    if (entities.empty()) throw ContractError("panel has no entities");
    std::size_t n = entities.front().timestamps.size();
    for (const PanelEntity& e : entities)
        if (e.timestamps.size() != n)
            throw ContractError("entities differ in length; temporal splits need one clock");
    return n;
}

PanelSplits split_ranges(std::size_t total, const SplitSpec& spec) {
    if (spec.validation == 0) throw ConfigError("validation split must be non-empty");
    if (spec.test == 0) throw ConfigError("test split must be non-empty");
    if (spec.validation + spec.test >= total)
        throw ConfigError("validation plus test duration leaves no training data");
    PanelSplits s;
    s.train = {0, total - spec.validation - spec.test};
    s.validation = {s.train.end, s.train.end + spec.validation};
    s.test = {s.validation.end, total};
    return s;
}

const char* normalization_mode_name(NormalizationMode mode) {
    switch (mode) {
        case NormalizationMode::Global: return "global";
        case NormalizationMode::PerEntity: return "per_entity";
    }
    throw ConfigError("unknown normalization mode value");
}

NormalizationMode normalization_mode_from_name(const std::string& name) {
    if (name == "global") return NormalizationMode::Global;
    if (name == "per_entity") return NormalizationMode::PerEntity;
    throw ConfigError("unknown normalization mode '" + name +
                      "' (expected global|per_entity)");
}

const FeatureScale& NormalizationStats::for_feature(std::size_t entity,
                                                    std::size_t feature) const {
    std::size_t slot = mode == NormalizationMode::Global ? 0 : entity;
    if (slot >= scales.size() || feature >= scales[slot].size())
        throw ContractError("normalization stats do not cover the requested feature");
    return scales[slot][feature];
}

NormalizationStats fit_normalization(const PanelDataset& data, const TimeRange& range,
                                     NormalizationMode mode, const AccessObserver& observer) {
    data.validate();
    std::size_t total = data.common_length();
    if (range.begin >= range.end || range.end > total)
        throw ConfigError("normalization fitting range is empty or out of bounds");

    const std::size_t features = data.feature_count();
    const double n = static_cast<double>(range.length());

    // population statistics per entity, two-pass for stability
    std::vector<std::vector<FeatureScale>> per_entity;
    for (std::size_t e = 0; e < data.entities.size(); ++e) {
        const Tensor& values = data.entities[e].values;
        std::vector<double> mean(features, 0.0), var(features, 0.0);
        for (std::size_t t = range.begin; t < range.end; ++t) {
            if (observer) observer(e, t);
            for (std::size_t f = 0; f < features; ++f) mean[f] += values.at(t, f);
        }
        for (std::size_t f = 0; f < features; ++f) mean[f] /= n;
        for (std::size_t t = range.begin; t < range.end; ++t)
            for (std::size_t f = 0; f < features; ++f) {
                double d = values.at(t, f) - mean[f];
                var[f] += d * d;
            }
        std::vector<FeatureScale> row(features);
        for (std::size_t f = 0; f < features; ++f) {
            row[f].mean = mean[f];
            row[f].scale = std::sqrt(var[f] / n);
        }
        per_entity.push_back(std::move(row));
    }

    NormalizationStats stats;
    stats.mode = mode;
    auto flag_degenerate = [&](FeatureScale& s, const std::string& where) {
        if (s.scale == 0.0) {
            s.scale = 1.0;
            s.degenerate = true;
            stats.warnings.push_back("feature " + where +
                                     " is constant over the fitting range; left unscaled");
        }
    };

    if (mode == NormalizationMode::Global) {
        // one shared scale: per-entity statistics averaged across entities
        double m = static_cast<double>(per_entity.size());
        std::vector<FeatureScale> pooled(features);
        for (std::size_t f = 0; f < features; ++f) {
            double mean_sum = 0.0, scale_sum = 0.0;
            for (const auto& row : per_entity) {
                mean_sum += row[f].mean;
                scale_sum += row[f].scale;
            }
            pooled[f].mean = mean_sum / m;
            pooled[f].scale = scale_sum / m;
            flag_degenerate(pooled[f], "'" + data.feature_names[f] + "'");
        }
        stats.scales.push_back(std::move(pooled));
    } else {
        for (std::size_t e = 0; e < per_entity.size(); ++e) {
            for (std::size_t f = 0; f < features; ++f)
                flag_degenerate(per_entity[e][f], "'" + data.feature_names[f] +
                                                      "' of entity '" + data.entities[e].id +
                                                      "'");
            stats.scales.push_back(std::move(per_entity[e]));
        }
    }
    return stats;
}

PanelDataset apply_normalization(const PanelDataset& data, const NormalizationStats& stats) {
    data.validate();
    PanelDataset out = data;
    for (std::size_t e = 0; e < out.entities.size(); ++e) {
        Tensor& values = out.entities[e].values;
        for (std::size_t f = 0; f < data.feature_count(); ++f) {
            const FeatureScale& s = stats.for_feature(e, f);
            for (std::size_t t = 0; t < values.rows(); ++t)
                values.at(t, f) = (values.at(t, f) - s.mean) / s.scale;
        }
    }
    return out;
}

double denormalize_target(const NormalizationStats& stats, std::size_t entity,
                          std::size_t target_column, double value) {
    const FeatureScale& s = stats.for_feature(entity, target_column);
    return value * s.scale + s.mean;
}

WindowBuild make_windows(const PanelDataset& data, const TimeRange& targets_in,
                         std::size_t window, std::size_t horizon, bool borrow_context,
                         std::size_t stride, const AccessObserver& observer) {
    data.validate();
    if (window < 1 || horizon < 1) throw ConfigError("window and horizon must be positive");
    if (stride < 1) throw ConfigError("window stride must be positive");
    std::size_t total = data.common_length();
    if (targets_in.begin >= targets_in.end || targets_in.end > total)
        throw ConfigError("window target range is empty or out of bounds");

    WindowBuild out;
    // anchors t: inputs are rows [t-m+1, t], targets rows [t+1, t+h];
    // targets must sit inside the range, inputs inside it too unless
    // context borrowing reaches into earlier history
    std::size_t lo = window - 1;
    if (targets_in.begin > 0) lo = std::max(lo, targets_in.begin - 1);
    if (!borrow_context) lo = std::max(lo, targets_in.begin + window - 1);
    if (targets_in.end < horizon + 1 || lo > targets_in.end - 1 - horizon) {
        out.warnings.push_back("range [" + std::to_string(targets_in.begin) + "," +
                               std::to_string(targets_in.end) + ") too short for window " +
                               std::to_string(window) + " + horizon " +
                               std::to_string(horizon) + "; no samples");
        return out;
    }
    std::size_t hi = targets_in.end - 1 - horizon;

    const std::size_t features = data.feature_count();
    for (std::size_t e = 0; e < data.entities.size(); ++e) {
        const PanelEntity& entity = data.entities[e];
        for (std::size_t t = lo; t <= hi; t += stride) {
            WindowSample s;
            s.entity = e;
            s.anchor = t;
            s.window = Tensor({window, features});
            for (std::size_t r = 0; r < window; ++r) {
                std::size_t src = t - window + 1 + r;
                if (observer) observer(e, src);
                for (std::size_t f = 0; f < features; ++f)
                    s.window.at(r, f) = entity.values.at(src, f);
            }
            s.target = Tensor({horizon});
            for (std::size_t k = 0; k < horizon; ++k) {
                if (observer) observer(e, t + 1 + k);
                s.target.at(k) = entity.values.at(t + 1 + k, data.target_column);
            }
            s.statics = entity.statics;
            out.samples.push_back(std::move(s));
        }
    }
    return out;
}

PanelSchema load_schema(const std::string& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& err) {
        throw ParseError(path + ": invalid JSON: " + err.what());
    }
    if (!doc.is_object()) throw ParseError(path + ": schema must be a JSON object");

    PanelSchema schema;
    bool have_target = false;
    for (const auto& [key, value] : doc.items()) {
        if (key == "target") {
            if (!value.is_string()) throw ParseError(path + ": 'target' must be a string");
            schema.target = value.get<std::string>();
            have_target = true;
        } else if (key == "frequency") {
            if (!value.is_string()) throw ParseError(path + ": 'frequency' must be a string");
            schema.frequency = value.get<std::string>();
        } else if (key == "forward_fill") {
            if (!value.is_boolean())
                throw ParseError(path + ": 'forward_fill' must be a boolean");
            schema.forward_fill = value.get<bool>();
        } else {
            throw ParseError(path + ": unknown schema key '" + key + "'");
        }
    }
    if (!have_target || schema.target.empty())
        throw ParseError(path + ": schema must name a non-empty 'target'");
    return schema;
}

namespace {

struct EntityRows {
    std::vector<std::int64_t> timestamps;
    std::vector<double> values;  // row-major, features per row
};

} // namespace

PanelDataset load_csv(const std::string& panel_path, const std::string& static_path,
                      const PanelSchema& schema) {
    std::vector<std::string> lines = split_lines(read_file(panel_path));
    if (!lines.empty() && lines[0].rfind("\xEF\xBB\xBF", 0) == 0) lines[0].erase(0, 3);
    if (lines.empty()) throw ParseError(panel_path + ": empty file");

    std::vector<std::string> header = split_fields(lines[0]);
    if (header.size() < 3 || header[0] != "entity_id" || header[1] != "timestamp")
        throw ParseError(at_line(panel_path, 1) +
                         "header must be entity_id,timestamp,<feature...>");
    std::vector<std::string> feature_names(header.begin() + 2, header.end());

    PanelDataset data;
    data.feature_names = feature_names;
    data.frequency = schema.frequency;
    auto target_it = std::find(feature_names.begin(), feature_names.end(), schema.target);
    if (target_it == feature_names.end())
        throw ParseError(panel_path + ": target feature '" + schema.target +
                         "' not in header");
    data.target_column = static_cast<std::size_t>(target_it - feature_names.begin());

    std::vector<std::string> order;
    std::map<std::string, EntityRows> rows;
    const std::size_t features = feature_names.size();

    for (std::size_t i = 1; i < lines.size(); ++i) {
        if (lines[i].empty()) {
            if (i + 1 == lines.size()) continue;  // trailing newline
            throw ParseError(at_line(panel_path, i + 1) + "empty line");
        }
        std::vector<std::string> fields = split_fields(lines[i]);
        if (fields.size() != features + 2)
            throw ParseError(at_line(panel_path, i + 1) + "expected " +
                             std::to_string(features + 2) + " fields, got " +
                             std::to_string(fields.size()));
        if (fields[0].empty())
            throw ParseError(at_line(panel_path, i + 1) + "empty entity id");

        auto [it, fresh] = rows.try_emplace(fields[0]);
        if (fresh) order.push_back(fields[0]);
        EntityRows& er = it->second;

        std::int64_t ts = parse_timestamp(fields[1], panel_path, i + 1);
        if (!er.timestamps.empty() && ts <= er.timestamps.back())
            throw ParseError(at_line(panel_path, i + 1) + "timestamps of entity '" +
                             fields[0] + "' do not strictly increase");
        er.timestamps.push_back(ts);

        for (std::size_t f = 0; f < features; ++f) {
            const std::string& field = fields[2 + f];
            if (field.empty()) {
                if (!schema.forward_fill)
                    throw ParseError(at_line(panel_path, i + 1) + "missing value for '" +
                                     feature_names[f] + "' (forward fill disabled)");
                if (er.timestamps.size() == 1)
                    throw ParseError(at_line(panel_path, i + 1) + "missing value for '" +
                                     feature_names[f] + "' with no previous row to fill from");
                er.values.push_back(er.values[er.values.size() - features]);
            } else {
                er.values.push_back(parse_double(field, panel_path, i + 1));
            }
        }
    }
    if (order.empty()) throw ParseError(panel_path + ": no data rows");

    for (const std::string& id : order) {
        EntityRows& er = rows[id];
        PanelEntity entity;
        entity.id = id;
        entity.timestamps = std::move(er.timestamps);
        entity.values = Tensor({entity.timestamps.size(), features}, std::move(er.values));
        data.entities.push_back(std::move(entity));
    }

    if (!static_path.empty()) {
        std::vector<std::string> slines = split_lines(read_file(static_path));
        if (!slines.empty() && slines[0].rfind("\xEF\xBB\xBF", 0) == 0) slines[0].erase(0, 3);
        if (slines.empty()) throw ParseError(static_path + ": empty file");
        std::vector<std::string> sheader = split_fields(slines[0]);
        if (sheader.size() < 2 || sheader[0] != "entity_id")
            throw ParseError(at_line(static_path, 1) +
                             "header must be entity_id,<static feature...>");
        data.static_names.assign(sheader.begin() + 1, sheader.end());

        std::map<std::string, std::size_t> index;
        for (std::size_t e = 0; e < data.entities.size(); ++e) index[data.entities[e].id] = e;
        std::set<std::string> covered;
        for (std::size_t i = 1; i < slines.size(); ++i) {
            if (slines[i].empty()) {
                if (i + 1 == slines.size()) continue;
                throw ParseError(at_line(static_path, i + 1) + "empty line");
            }
            std::vector<std::string> fields = split_fields(slines[i]);
            if (fields.size() != data.static_names.size() + 1)
                throw ParseError(at_line(static_path, i + 1) + "expected " +
                                 std::to_string(data.static_names.size() + 1) +
                                 " fields, got " + std::to_string(fields.size()));
            auto it = index.find(fields[0]);
            if (it == index.end())
                throw ParseError(at_line(static_path, i + 1) + "entity '" + fields[0] +
                                 "' does not appear in the panel file");
            if (!covered.insert(fields[0]).second)
                throw ParseError(at_line(static_path, i + 1) + "duplicate static row for '" +
                                 fields[0] + "'");
            Tensor statics({data.static_names.size()});
            for (std::size_t f = 0; f < data.static_names.size(); ++f)
                statics.at(f) = parse_double(fields[1 + f], static_path, i + 1);
            data.entities[it->second].statics = std::move(statics);
        }
        for (const PanelEntity& e : data.entities)
            if (!covered.count(e.id))
                throw ParseError(static_path + ": no static row for entity '" + e.id + "'");
    }

    data.validate();
    return data;
}

void save_csv(const PanelDataset& data, const std::string& panel_path,
              const std::string& static_path) {
    data.validate();
    if (static_path.empty() != data.static_names.empty())
        throw ContractError(data.static_names.empty()
                                ? "static path given but the panel has no static features"
                                : "panel has static features; a static path is required");

    std::string text = "entity_id,timestamp";
    for (const std::string& name : data.feature_names) {
        check_field_text(name, "feature name");
        text += "," + name;
    }
    text += "\n";
    for (const PanelEntity& e : data.entities) {
        check_field_text(e.id, "entity id");
        for (std::size_t t = 0; t < e.timestamps.size(); ++t) {
            text += e.id + "," + std::to_string(e.timestamps[t]);
            for (std::size_t f = 0; f < data.feature_count(); ++f)
                text += "," + format_value(e.values.at(t, f));
            text += "\n";
        }
    }
    atomic_write_file(panel_path, text);

    if (!static_path.empty()) {
        std::string stext = "entity_id";
        for (const std::string& name : data.static_names) {
            check_field_text(name, "static feature name");
            stext += "," + name;
        }
        stext += "\n";
        for (const PanelEntity& e : data.entities) {
            stext += e.id;
            for (std::size_t f = 0; f < data.static_names.size(); ++f)
                stext += "," + format_value(e.statics.at(f));
            stext += "\n";
        }
        atomic_write_file(static_path, stext);
    }
}

} // namespace saf
