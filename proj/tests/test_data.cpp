#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "dfg/data.hpp"
#include "doctest.h"

using namespace dfg;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

void write_log(const fs::path& file, const std::vector<std::pair<std::vector<double>, int>>& rows) {
    std::ofstream out(file);
    for (const auto& [feats, label] : rows) {
        for (double v : feats) out << v << "\t";
        out << label << "\n";
    }
}

std::vector<std::pair<std::vector<double>, int>> fixture_rows(int n, int offset) {
    std::vector<std::pair<std::vector<double>, int>> rows;
    for (int i = 0; i < n; ++i) {
        std::vector<double> feats(23);
        for (int d = 0; d < 23; ++d) feats[d] = 0.1 * d + i + offset;
        rows.push_back({feats, i % 13});  // labels 0..12, 0 is the unlabeled segment
    }
    return rows;
}

}  // namespace

TEST_CASE("activity log loader: filtering, shapes, splits, standardization") {
    TempDir dir("dfg_mhealth_fixture");
    write_log(dir.path / "mHealth_subject1.log", fixture_rows(130, 0));
    write_log(dir.path / "mHealth_subject2.log", fixture_rows(130, 7));

    Dataset data = load_mhealth(dir.path.string());
    CHECK(data.class_count == 12);
    CHECK(data.view_count() == 1);
    CHECK(data.views[0].cols == 23);

    // 10 of every 130 rows per file carry label 0 and are dropped.
    CHECK(data.size() == 240);
    for (int label : data.labels) {
        CHECK(label >= 0);
        CHECK(label < 12);
    }

    // 80/10/10 within one row, disjoint and exhaustive.
    CHECK(std::abs(static_cast<int>(data.train_idx.size()) - 192) <= 1);
    CHECK(std::abs(static_cast<int>(data.val_idx.size()) - 24) <= 1);
    std::set<int> seen;
    for (const auto* idx : {&data.train_idx, &data.val_idx, &data.test_idx})
        for (int i : *idx) CHECK(seen.insert(i).second);
    CHECK(static_cast<int>(seen.size()) == data.size());

    // Standardization statistics come from the train rows alone.
    for (int c = 0; c < 23; ++c) {
        double sum = 0, sq = 0;
        for (int r : data.train_idx) {
            sum += data.views[0](r, c);
            sq += data.views[0](r, c) * data.views[0](r, c);
        }
        const double mean = sum / data.train_idx.size();
        const double var = sq / data.train_idx.size() - mean * mean;
        CHECK(mean == doctest::Approx(0.0).epsilon(1e-4));
        CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
    }
}

TEST_CASE("loader rejects malformed rows and unknown labels") {
    TempDir dir("dfg_mhealth_bad");
    SUBCASE("short row") {
        std::ofstream(dir.path / "s1.log") << "1.0\t2.0\t3\n";
        CHECK_THROWS_AS(load_mhealth(dir.path.string()), std::runtime_error);
    }
    SUBCASE("label out of range") {
        auto rows = fixture_rows(5, 0);
        rows[2].second = 13;
        write_log(dir.path / "s1.log", rows);
        CHECK_THROWS_AS(load_mhealth(dir.path.string()), std::runtime_error);
    }
    SUBCASE("non-numeric junk") {
        std::ofstream out(dir.path / "s1.log");
        for (int d = 0; d < 23; ++d) out << "0.5\t";
        out << "oops\n";
        out.close();
        CHECK_THROWS_AS(load_mhealth(dir.path.string()), std::runtime_error);
    }
    SUBCASE("missing path") {
        CHECK_THROWS_AS(load_mhealth((dir.path / "nowhere").string()), std::runtime_error);
    }
}

TEST_CASE("loader subsampling is seeded and bounded") {
    TempDir dir("dfg_mhealth_sub");
    write_log(dir.path / "s1.log", fixture_rows(260, 0));
    MhealthOptions opts;
    opts.max_rows = 100;
    opts.standardize = false;
    Dataset a = load_mhealth(dir.path.string(), opts);
    Dataset b = load_mhealth(dir.path.string(), opts);
    CHECK(a.size() == 100);
    CHECK(a.labels == b.labels);
    CHECK(a.views[0].a == b.views[0].a);
}

TEST_CASE("splits are a function of the seed alone") {
    TempDir dir("dfg_mhealth_seed");
    write_log(dir.path / "s1.log", fixture_rows(130, 0));
    MhealthOptions opts;
    opts.split_seed = 41;
    Dataset a = load_mhealth(dir.path.string(), opts);
    Dataset b = load_mhealth(dir.path.string(), opts);
    CHECK(a.train_idx == b.train_idx);
    CHECK(a.test_idx == b.test_idx);
    opts.split_seed = 42;
    Dataset c = load_mhealth(dir.path.string(), opts);
    CHECK(a.train_idx != c.train_idx);
}

TEST_CASE("class weights: inverse frequency, mean one") {
    Dataset balanced;
    balanced.class_count = 3;
    balanced.views.emplace_back(30, 1);
    for (int i = 0; i < 30; ++i) {
        balanced.labels.push_back(i % 3);
        balanced.train_idx.push_back(i);
    }
    for (double w : class_weights(balanced)) CHECK(w == doctest::Approx(1.0).epsilon(1e-12));

    Dataset skewed;
    skewed.class_count = 2;
    skewed.views.emplace_back(100, 1);
    for (int i = 0; i < 100; ++i) {
        skewed.labels.push_back(i < 90 ? 0 : 1);
        skewed.train_idx.push_back(i);
    }
    auto w = class_weights(skewed);
    // Raw inverse-frequency weights are (5/9, 5); normalized they keep the
    // 1:9 ratio and average exactly 1.
    CHECK(w[1] / w[0] == doctest::Approx(9.0).epsilon(1e-12));
    CHECK((w[0] + w[1]) / 2 == doctest::Approx(1.0).epsilon(1e-12));

    Dataset missing;
    missing.class_count = 3;
    missing.views.emplace_back(10, 1);
    for (int i = 0; i < 10; ++i) {
        missing.labels.push_back(i % 2);
        missing.train_idx.push_back(i);
    }
    CHECK_THROWS_AS(class_weights(missing), std::invalid_argument);
}

TEST_CASE("synthetic multi-view generator: shapes, determinism, occlusion") {
    SynthMultiViewSpec spec;
    Dataset data = synth_multiview(spec);
    CHECK(data.size() == 1400);
    CHECK(data.view_count() == 6);
    CHECK(data.views[0].cols == 3072);
    CHECK(data.class_count == 3);

    Dataset again = synth_multiview(spec);
    CHECK(data.labels == again.labels);
    for (int v = 0; v < 6; ++v) CHECK(data.views[v].a == again.views[v].a);

    SynthMultiViewSpec clear = spec;
    clear.occlusion_rate = 0.0;
    clear.instances = 200;
    Dataset no_occ = synth_multiview(clear);
    int zero_views = 0;
    for (int v = 0; v < 6; ++v)
        for (int r = 0; r < no_occ.size(); ++r) {
            bool all_zero = true;
            for (int c = 0; c < no_occ.views[v].cols && all_zero; ++c)
                all_zero = no_occ.views[v](r, c) == 0.0f;
            zero_views += all_zero;
        }
    CHECK(zero_views == 0);

    SynthMultiViewSpec occluded = spec;
    occluded.occlusion_rate = 0.3;
    occluded.instances = 200;
    Dataset some_occ = synth_multiview(occluded);
    zero_views = 0;
    for (int v = 0; v < 6; ++v)
        for (int r = 0; r < some_occ.size(); ++r) {
            bool all_zero = true;
            for (int c = 0; c < some_occ.views[v].cols && all_zero; ++c)
                all_zero = some_occ.views[v](r, c) == 0.0f;
            zero_views += all_zero;
        }
    // 1200 views at rate 0.3: far from zero, far from all.
    CHECK(zero_views > 200);
    CHECK(zero_views < 600);
}

TEST_CASE("synthetic class frequencies converge to the skew") {
    SynthMultiViewSpec spec;
    spec.instances = 10000;
    spec.view_dim = 8;  // keep the big-N draw cheap
    spec.class_skew = {0.25, 0.65, 0.10};
    Dataset data = synth_multiview(spec);
    std::vector<int> counts(3, 0);
    for (int label : data.labels) ++counts[label];
    for (int c = 0; c < 3; ++c) {
        const double freq = static_cast<double>(counts[c]) / data.size();
        CHECK(std::abs(freq - spec.class_skew[c]) < 0.02);
    }
}

TEST_CASE("dataset container round-trips") {
    SynthMultiViewSpec spec;
    spec.instances = 50;
    spec.view_dim = 16;
    Dataset data = synth_multiview(spec);

    TempDir dir("dfg_dfgd");
    const std::string path = (dir.path / "sample.dfgd").string();
    save_dfgd(data, path);
    Dataset back = load_dfgd(path, spec.split_seed);
    CHECK(back.labels == data.labels);
    CHECK(back.class_count == data.class_count);
    for (int v = 0; v < data.view_count(); ++v) CHECK(back.views[v].a == data.views[v].a);
    CHECK(back.train_idx == data.train_idx);

    std::ofstream(dir.path / "junk.dfgd") << "not a container";
    CHECK_THROWS_AS(load_dfgd((dir.path / "junk.dfgd").string(), 1), std::runtime_error);
}

TEST_CASE("synthetic activity corpus round-trips through the loader") {
    TempDir dir("dfg_synth_corpus");
    write_synthetic_mhealth_corpus(dir.path.string(), 2000, 3, 9);
    Dataset data = load_mhealth(dir.path.string());
    CHECK(data.views[0].cols == 23);
    CHECK(data.class_count == 12);
    // ~3% filler rows dropped.
    CHECK(data.size() > 1800);
    CHECK(data.size() < 2000);
    std::set<int> present(data.labels.begin(), data.labels.end());
    CHECK(present.size() == 12);
}
