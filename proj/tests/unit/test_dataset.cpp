#include <doctest.h>

#include "tcdrguard/dataset.hpp"
#include "tcdrguard/rng.hpp"

#include <filesystem>
#include <fstream>

using namespace tcdr;
using namespace tcdr::data;

namespace {

sim::MeasurementWindow make_window(uint64_t seed, Label label) {
    Rng rng(seed);
    sim::MeasurementWindow w;
    w.label = label;
    w.scenario_id = "scn-" + std::to_string(seed);
    w.trigger_index = 16;
    for (auto& row : w.values)
        for (double& v : row) v = rng.uniform(-5.0, 5.0);
    return w;
}

Dataset make_dataset(size_t faults, size_t attacks, uint64_t seed = 1) {
    std::vector<sim::MeasurementWindow> windows;
    for (size_t i = 0; i < faults; ++i) windows.push_back(make_window(seed * 1000 + i, Label::Fault));
    for (size_t i = 0; i < attacks; ++i)
        windows.push_back(make_window(seed * 1000 + faults + i, Label::Attack));
    return Dataset::from_windows(std::move(windows));
}

struct TempFile {
    std::filesystem::path path;
    explicit TempFile(const char* name) : path(std::filesystem::temp_directory_path() / name) {}
    ~TempFile() { std::filesystem::remove(path); }
};

} // namespace

TEST_SUITE("dataset") {

TEST_CASE("ingest counts classes") {
    const auto ds = make_dataset(7, 3);
    TempFile f("tcdr_ds_counts.records");
    export_dataset(ds, f.path.string(), FileFormat::Records);
    const auto back = ingest(f.path.string(), FileFormat::Records);
    CHECK(back.size() == 10);
    CHECK(back.count(Label::Fault) == 7);
    CHECK(back.count(Label::Attack) == 3);
}

TEST_CASE("malformed records are rejected with line numbers") {
    const auto ds = make_dataset(2, 1);
    TempFile f("tcdr_ds_bad.records");
    export_dataset(ds, f.path.string(), FileFormat::Records);

    SUBCASE("wrong field count") {
        std::ofstream out(f.path, std::ios::app);
        out << "scn-x,FAULT,16,0.5,0.5\n";
        out.close();
        try {
            ingest(f.path.string(), FileFormat::Records);
            FAIL("expected DataError");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find(":4:") != std::string::npos);
            CHECK(std::string(e.what()).find("fields") != std::string::npos);
        }
    }
    SUBCASE("unknown label") {
        std::string line = sim::window_to_record(ds.windows[0]);
        line.replace(line.find("FAULT"), 5, "HELLO");
        std::ofstream out(f.path, std::ios::app);
        out << line << "\n";
        out.close();
        CHECK_THROWS_WITH_AS(ingest(f.path.string(), FileFormat::Records),
                             doctest::Contains("unknown label"), DataError);
    }
    SUBCASE("non-finite value") {
        std::ofstream out(f.path, std::ios::app);
        std::string line = sim::window_to_record(ds.windows[0]);
        line.replace(line.rfind(','), std::string::npos, ",inf");
        out << line << "\n";
        out.close();
        CHECK_THROWS_AS(ingest(f.path.string(), FileFormat::Records), DataError);
    }
}

TEST_CASE("stratified split is exact on round numbers") {
    const auto ds = make_dataset(100, 100);
    SplitSpec spec;
    const auto [train, test] = stratified_split(ds, spec);
    CHECK(train.count(Label::Fault) == 80);
    CHECK(train.count(Label::Attack) == 80);
    CHECK(test.count(Label::Fault) == 20);
    CHECK(test.count(Label::Attack) == 20);
}

TEST_CASE("split is deterministic under the fixed seed") {
    const auto ds = make_dataset(137, 61);
    SplitSpec spec;
    const auto [train1, test1] = stratified_split(ds, spec);
    const auto [train2, test2] = stratified_split(ds, spec);
    CHECK(train1.fingerprint == train2.fingerprint);
    CHECK(test1.fingerprint == test2.fingerprint);

    SUBCASE("changing the seed moves members but keeps proportions") {
        SplitSpec other;
        other.seed = 43;
        const auto [train3, test3] = stratified_split(ds, other);
        CHECK(train3.fingerprint != train1.fingerprint);
        CHECK(train3.count(Label::Fault) == train1.count(Label::Fault));
        CHECK(train3.count(Label::Attack) == train1.count(Label::Attack));
    }
}

TEST_CASE("per-class train counts stay within one sample of the fraction") {
    SplitSpec spec;
    for (size_t n_fault : {3u, 7u, 11u, 23u, 50u}) {
        for (size_t n_attack : {2u, 5u, 9u, 31u}) {
            const auto ds = make_dataset(n_fault, n_attack, n_fault * 100 + n_attack);
            const auto [train, test] = stratified_split(ds, spec);
            CHECK(std::abs(static_cast<double>(train.count(Label::Fault)) -
                           0.8 * static_cast<double>(n_fault)) <= 1.0);
            CHECK(std::abs(static_cast<double>(train.count(Label::Attack)) -
                           0.8 * static_cast<double>(n_attack)) <= 1.0);
            CHECK(train.size() + test.size() == ds.size());
            CHECK(overlap_count(train, test) == 0);
        }
    }
}

TEST_CASE("split rejects classes with fewer than two members") {
    const auto ds = make_dataset(10, 1);
    SplitSpec spec;
    CHECK_THROWS_AS(stratified_split(ds, spec), DataError);
}

TEST_CASE("fingerprint is order-independent and format-independent") {
    auto ds = make_dataset(12, 8);
    TempFile rec("tcdr_ds_rt.records");
    TempFile csv("tcdr_ds_rt.csv");
    export_dataset(ds, rec.path.string(), FileFormat::Records);
    export_dataset(ds, csv.path.string(), FileFormat::Csv);
    const auto from_rec = ingest(rec.path.string(), FileFormat::Records);
    const auto from_csv = ingest(csv.path.string(), FileFormat::Csv);
    CHECK(from_rec.fingerprint == ds.fingerprint);
    CHECK(from_csv.fingerprint == ds.fingerprint);

    SUBCASE("shuffled file keeps the fingerprint") {
        auto shuffled = ds.windows;
        Rng rng(5);
        rng.shuffle(shuffled);
        const auto ds2 = Dataset::from_windows(std::move(shuffled));
        CHECK(ds2.fingerprint == ds.fingerprint);
    }
}

TEST_CASE("empty dataset round-trips") {
    const auto ds = Dataset::from_windows({});
    TempFile f("tcdr_ds_empty.records");
    export_dataset(ds, f.path.string(), FileFormat::Records);
    const auto back = ingest(f.path.string(), FileFormat::Records);
    CHECK(back.size() == 0);
    CHECK(back.fingerprint == ds.fingerprint);
}

TEST_CASE("stratified subset keeps the class ratio") {
    const auto ds = make_dataset(300, 100);
    const auto sub = stratified_subset(ds, 100, 7);
    CHECK(sub.size() == 100);
    CHECK(sub.count(Label::Fault) == 75);
    CHECK(sub.count(Label::Attack) == 25);
}

} // TEST_SUITE
