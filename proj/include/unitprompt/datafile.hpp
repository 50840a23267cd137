#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "quantizer.hpp"
#include "tasks.hpp"
#include "train.hpp"

namespace unitprompt {

namespace detail {

inline void atomic_write_text(const std::string& path, const std::string& content) {
    std::filesystem::path target(path);
    if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
    std::filesystem::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(out.good(), format_msg("atomic_write_text: cannot open '", tmp.string(), "'"));
        out << content;
        require(out.good(), format_msg("atomic_write_text: write failed for '", tmp.string(), "'"));
    }
    std::filesystem::rename(tmp, target);
}

inline std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), format_msg("read_text: cannot open '", path, "'"));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string format_double(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", x);
    return std::string(buf);
}

}  // namespace detail

// Datasets persist as a directory: a small meta file naming the task and its
// class set, and one line-delimited record file per split with fields `id`,
// `units`, `labels`.
inline void save_dataset(const std::string& dir, const Dataset& ds) {
    std::ostringstream meta;
    meta << "kind " << task_kind_name(ds.kind) << "\n";
    for (const auto& c : ds.class_set) meta << "class " << c << "\n";
    detail::atomic_write_text(dir + "/meta.txt", meta.str());

    auto write_split = [&](const std::string& name, const std::vector<LabeledExample>& split) {
        std::ostringstream out;
        for (const auto& ex : split) {
            nlohmann::ordered_json rec;
            rec["id"] = ex.id;
            rec["units"] = ex.input_units;
            rec["labels"] = ex.labels;
            out << rec.dump() << "\n";
        }
        detail::atomic_write_text(dir + "/" + name + ".jsonl", out.str());
    };
    write_split("train", ds.train);
    write_split("valid", ds.valid);
    write_split("test", ds.test);
}

inline Dataset load_dataset(const std::string& dir) {
    Dataset ds;
    std::istringstream meta(detail::read_text(dir + "/meta.txt"));
    std::string line;
    bool saw_kind = false;
    while (std::getline(meta, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "kind") {
            std::string kind;
            ls >> kind;
            ds.kind = task_kind_from(kind);
            saw_kind = true;
        } else if (tag == "class") {
            std::string rest;
            std::getline(ls, rest);
            require(rest.size() > 1, format_msg("load_dataset: bad class line '", line, "'"));
            ds.class_set.push_back(rest.substr(1));
        } else {
            throw std::invalid_argument(format_msg("load_dataset: unknown meta line '", line, "'"));
        }
    }
    require(saw_kind, format_msg("load_dataset: '", dir, "/meta.txt' has no kind line"));
    require(!ds.class_set.empty(), "load_dataset: meta has no classes");

    auto read_split = [&](const std::string& name) {
        std::istringstream in(detail::read_text(dir + "/" + name + ".jsonl"));
        std::vector<LabeledExample> split;
        std::string rec_line;
        while (std::getline(in, rec_line)) {
            if (rec_line.empty()) continue;
            auto rec = nlohmann::json::parse(rec_line);
            LabeledExample ex;
            ex.id = rec.at("id").get<std::string>();
            ex.input_units = rec.at("units").get<UnitSequence>();
            ex.labels = rec.at("labels").get<std::vector<std::string>>();
            split.push_back(std::move(ex));
        }
        return split;
    };
    ds.train = read_split("train");
    ds.valid = read_split("valid");
    ds.test = read_split("test");
    return ds;
}

// Feature files carry `id` and `features` (a list of frame vectors) per line;
// unit files carry `id` and `units`.
struct FeatureRecord {
    std::string id;
    FeatureSeq features;
};

inline void save_features(const std::string& path, const std::vector<FeatureRecord>& records) {
    std::ostringstream out;
    for (const auto& fr : records) {
        nlohmann::ordered_json rec;
        rec["id"] = fr.id;
        rec["features"] = fr.features;
        out << rec.dump() << "\n";
    }
    detail::atomic_write_text(path, out.str());
}

inline std::vector<FeatureRecord> load_features(const std::string& path) {
    std::istringstream in(detail::read_text(path));
    std::vector<FeatureRecord> records;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto rec = nlohmann::json::parse(line);
        FeatureRecord fr;
        fr.id = rec.at("id").get<std::string>();
        fr.features = rec.at("features").get<FeatureSeq>();
        records.push_back(std::move(fr));
    }
    require(!records.empty(), format_msg("load_features: no records in '", path, "'"));
    return records;
}

inline void save_units(const std::string& path, const std::vector<std::string>& ids,
                       const std::vector<UnitSequence>& units) {
    require(ids.size() == units.size(), "save_units: id and unit counts differ");
    std::ostringstream out;
    for (size_t i = 0; i < ids.size(); ++i) {
        nlohmann::ordered_json rec;
        rec["id"] = ids[i];
        rec["units"] = units[i];
        out << rec.dump() << "\n";
    }
    detail::atomic_write_text(path, out.str());
}

// --- CSV --------------------------------------------------------------------

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

inline std::string csv_to_text(const CsvTable& t) {
    std::ostringstream out;
    out << join_strings(t.header, ",") << "\n";
    for (const auto& row : t.rows) {
        require(row.size() == t.header.size(), "csv_to_text: row width mismatch");
        out << join_strings(row, ",") << "\n";
    }
    return out.str();
}

inline void save_csv(const std::string& path, const CsvTable& t) {
    detail::atomic_write_text(path, csv_to_text(t));
}

inline CsvTable load_csv(const std::string& path) {
    std::istringstream in(detail::read_text(path));
    CsvTable t;
    std::string line;
    require(bool(std::getline(in, line)), format_msg("load_csv: '", path, "' is empty"));
    t.header = split_string(line, ',');
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto row = split_string(line, ',');
        require(row.size() == t.header.size(),
                format_msg("load_csv: row width mismatch in '", path, "'"));
        t.rows.push_back(std::move(row));
    }
    return t;
}

// Metrics rows use the fixed column layout shared by every experiment stage.
inline CsvTable metrics_table() {
    CsvTable t;
    t.header = {"task", "mode", "l", "params", "seed", "metric", "value"};
    return t;
}

inline void append_metric(CsvTable& t, const std::string& task, const std::string& mode, int l,
                          long long params, uint64_t seed, const std::string& metric,
                          double value) {
    t.rows.push_back({task, mode, std::to_string(l), std::to_string(params),
                      std::to_string(seed), metric, detail::format_double(value)});
}

inline void save_history(const std::string& path, const TrainReport& report) {
    CsvTable t;
    t.header = {"record", "index", "value"};
    for (size_t i = 0; i < report.step_loss.size(); ++i)
        t.rows.push_back({"step_loss", std::to_string(i), detail::format_double(report.step_loss[i])});
    for (const auto& e : report.epochs)
        t.rows.push_back({"valid_primary", std::to_string(e.epoch), detail::format_double(e.valid_primary)});
    t.rows.push_back({"best_epoch", "0", std::to_string(report.best_epoch)});
    t.rows.push_back({"best_valid", "0", detail::format_double(report.best_valid)});
    save_csv(path, t);
}

}  // namespace unitprompt
