#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dfg/mat.hpp"
#include "dfg/net.hpp"

namespace dfg {

// A labeled dataset with frozen train/val/test membership. Multi-view data
// keeps one feature matrix per view; single-view data has views.size() == 1.
struct Dataset {
    std::vector<Mat<float>> views;  // each N x view_dim
    std::vector<int> labels;        // N
    int class_count = 0;
    std::vector<int> train_idx, val_idx, test_idx;

    int size() const { return static_cast<int>(labels.size()); }
    int view_count() const { return static_cast<int>(views.size()); }
};

// Seeded permutation split, 80/10/10 within rounding. The split seed is kept
// apart from training seeds so model variants always compare on identical data.
void assign_splits(Dataset& data, uint64_t split_seed);

// Per-column standardization fit on the train rows only, applied everywhere.
void standardize(Dataset& data);

struct MhealthOptions {
    std::vector<int> feature_columns;  // defaults to 0..22
    int label_column = 23;
    uint64_t split_seed = 7;
    int max_rows = 0;      // 0 = keep everything; otherwise a seeded subsample
    bool standardize = true;
};

// Loads a directory (or single file) of whitespace-delimited activity logs:
// 24 numeric columns, the last one an activity label in 0..12. Label-0 rows
// (unlabeled segments) are dropped; the 12 real activities map to classes 0..11.
Dataset load_mhealth(const std::string& path, const MhealthOptions& opts = {});

struct SynthMultiViewSpec {
    int instances = 1400;
    int views = 6;
    int view_dim = 3072;
    int classes = 3;
    std::vector<double> class_skew = {0.25, 0.65, 0.10};  // skewed toward class 1
    double occlusion_rate = 0.05;  // chance a view is an all-zero (occluded) frame
    uint64_t seed = 1;
    uint64_t split_seed = 7;
};

// Deterministic stand-in for the multi-camera corpus: each class has a fixed
// per-view prototype pattern; instances are noisy renderings of it, with some
// views blacked out. Labels are recoverable by construction.
Dataset synth_multiview(const SynthMultiViewSpec& spec);

// Inverse-frequency class weights from the train split, normalized to mean 1.
std::vector<double> class_weights(const Dataset& data);

// Binary dataset container: magic "DFGD", version, dims header, features as
// little-endian 32-bit reals, labels as u16. Splits are re-derived on load.
void save_dfgd(const Dataset& data, const std::string& path);
Dataset load_dfgd(const std::string& path, uint64_t split_seed);

// Maps views onto iot nodes in node declaration order and slices out the
// given rows. Row indices refer to dataset rows.
std::map<std::string, Mat<float>> make_iot_inputs(const DistributedDnn& graph, const Dataset& data,
                                                  const std::vector<int>& rows);
std::vector<int> gather_labels(const Dataset& data, const std::vector<int>& rows);

// Writes a synthetic corpus in the activity-log format accepted by
// load_mhealth: per-subject files, 23 feature columns plus a label column,
// with label-0 filler rows interleaved. Used where no real corpus is on disk.
void write_synthetic_mhealth_corpus(const std::string& dir, int rows, int subjects, uint64_t seed);

}  // namespace dfg
