#include "tcdrguard/dataset.hpp"

#include "tcdrguard/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <unordered_set>

namespace tcdr::data {

namespace {

std::string csv_header() {
    std::string h = "scenario_id,label,trigger_index";
    for (int t = 0; t < sim::kWindowSamples; ++t)
        for (const char* c : {"a_in", "b_in", "c_in", "a_out", "b_out", "c_out"}) {
            char buf[24];
            std::snprintf(buf, sizeof(buf), ",t%02d_%s", t, c);
            h += buf;
        }
    return h;
}

} // namespace

const char* to_string(FileFormat f) { return f == FileFormat::Records ? "RECORDS" : "CSV"; }

FileFormat format_from_string(const std::string& s) {
    if (s == "RECORDS" || s == "records") return FileFormat::Records;
    if (s == "CSV" || s == "csv") return FileFormat::Csv;
    throw ConfigError("unknown dataset format: '" + s + "'");
}

FileFormat format_from_path(const std::string& path) {
    if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0)
        return FileFormat::Csv;
    return FileFormat::Records;
}

size_t Dataset::count(Label l) const {
    const auto it = class_counts.find(l);
    return it == class_counts.end() ? 0 : it->second;
}

Dataset Dataset::from_windows(std::vector<sim::MeasurementWindow> windows) {
    Dataset ds;
    ds.windows = std::move(windows);
    for (const auto& w : ds.windows) ++ds.class_counts[w.label];
    ds.fingerprint = dataset_fingerprint(ds.windows);
    return ds;
}

uint64_t dataset_fingerprint(const std::vector<sim::MeasurementWindow>& windows) {
    // Sum of per-record hashes: commutative, so record order is irrelevant.
    uint64_t acc = 0;
    for (const auto& w : windows) {
        uint64_t h = w.content_hash();
        h = fnv1a64_str(w.scenario_id, h);
        const int32_t ti = w.trigger_index;
        h = fnv1a64(&ti, sizeof(ti), h);
        acc += h;
    }
    return acc + static_cast<uint64_t>(windows.size());
}

Dataset ingest(const std::string& path, FileFormat format) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset file '" + path + "'");

    std::vector<sim::MeasurementWindow> windows;
    std::string line;
    size_t line_no = 0;
    bool header_checked = format != FileFormat::Csv;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (!header_checked) {
            header_checked = true;
            if (line != csv_header())
                throw DataError(path + ":1: unrecognized CSV header");
            continue;
        }
        try {
            windows.push_back(sim::window_from_record(line));
        } catch (const std::exception& e) {
            throw DataError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return Dataset::from_windows(std::move(windows));
}

void export_dataset(const Dataset& ds, const std::string& path, FileFormat format) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    if (format == FileFormat::Csv) out << csv_header() << "\n";
    for (const auto& w : ds.windows) out << sim::window_to_record(w) << "\n";
    if (!out) throw DataError("write failed for '" + path + "'");
}

void SplitSpec::validate() const {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ConfigError("train_fraction must be in (0, 1)");
}

std::pair<Dataset, Dataset> stratified_split(const Dataset& ds, const SplitSpec& spec) {
    spec.validate();
    std::map<Label, std::vector<size_t>> by_class;
    for (size_t i = 0; i < ds.windows.size(); ++i) by_class[ds.windows[i].label].push_back(i);
    for (const auto& [label, members] : by_class)
        if (members.size() < 2)
            throw DataError(std::string("class ") + tcdr::to_string(label) +
                            " has fewer than 2 members");

    std::vector<sim::MeasurementWindow> train, test;
    for (const auto& [label, members] : by_class) {
        std::vector<size_t> order = members;
        // Integer round-half-up of train_fraction * n keeps the split exact
        // and platform-independent for fractions in per-mille resolution.
        const uint64_t mille = static_cast<uint64_t>(std::llround(spec.train_fraction * 1000.0));
        const size_t n_train =
            static_cast<size_t>((mille * order.size() + 500) / 1000);
        Rng rng(derive_seed(spec.seed, static_cast<uint64_t>(label)));
        rng.shuffle(order);
        for (size_t i = 0; i < order.size(); ++i)
            (i < n_train ? train : test).push_back(ds.windows[order[i]]);
    }
    return {Dataset::from_windows(std::move(train)), Dataset::from_windows(std::move(test))};
}

size_t overlap_count(const Dataset& a, const Dataset& b) {
    std::unordered_set<uint64_t> seen;
    seen.reserve(a.windows.size());
    for (const auto& w : a.windows) seen.insert(w.content_hash());
    size_t n = 0;
    for (const auto& w : b.windows) n += seen.count(w.content_hash());
    return n;
}

Dataset stratified_subset(const Dataset& ds, size_t n, uint64_t seed) {
    if (n > ds.size()) throw DataError("subset larger than dataset");
    std::map<Label, std::vector<size_t>> by_class;
    for (size_t i = 0; i < ds.windows.size(); ++i) by_class[ds.windows[i].label].push_back(i);

    std::vector<sim::MeasurementWindow> keep;
    for (const auto& [label, members] : by_class) {
        std::vector<size_t> order = members;
        Rng rng(derive_seed(seed, 0x5b5e7u ^ static_cast<uint64_t>(label)));
        rng.shuffle(order);
        const size_t want = (n * members.size() + ds.size() / 2) / ds.size();
        for (size_t i = 0; i < std::min(want, order.size()); ++i)
            keep.push_back(ds.windows[order[i]]);
    }
    return Dataset::from_windows(std::move(keep));
}

} // namespace tcdr::data
