#pragma once

#include "tcdrguard/sim.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace tcdr::data {

enum class FileFormat : uint8_t { Records, Csv };

const char* to_string(FileFormat f);
FileFormat format_from_string(const std::string& s);
FileFormat format_from_path(const std::string& path); // by extension

struct Dataset {
    std::vector<sim::MeasurementWindow> windows;
    std::map<Label, size_t> class_counts;
    uint64_t fingerprint = 0;

    static Dataset from_windows(std::vector<sim::MeasurementWindow> windows);

    size_t size() const { return windows.size(); }
    size_t count(Label l) const;
};

struct SplitSpec {
    double train_fraction = 0.8;
    uint64_t seed = 42;

    void validate() const;
};

// Parse failures carry the 1-based line number and a per-record reason.
Dataset ingest(const std::string& path, FileFormat format);

// Deterministic per-class shuffle + split; per-class train count is
// round(train_fraction * count), computed in integer arithmetic.
std::pair<Dataset, Dataset> stratified_split(const Dataset& ds, const SplitSpec& spec);

void export_dataset(const Dataset& ds, const std::string& path, FileFormat format);

// Order-independent content hash; shuffling records does not change it.
uint64_t dataset_fingerprint(const std::vector<sim::MeasurementWindow>& windows);

// Count of windows whose content hash appears in both sets.
size_t overlap_count(const Dataset& a, const Dataset& b);

// Deterministic stratified subsample of n windows (used for reduced-scale
// training runs).
Dataset stratified_subset(const Dataset& ds, size_t n, uint64_t seed);

} // namespace tcdr::data
