#include "dfg/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "dfg/binio.hpp"

namespace fs = std::filesystem;

namespace dfg {

void assign_splits(Dataset& data, uint64_t split_seed) {
    const int n = data.size();
    if (n < 3) throw std::invalid_argument("dataset too small to split");
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(split_seed);
    std::shuffle(perm.begin(), perm.end(), rng);

    const int n_train = static_cast<int>(std::llround(0.8 * n));
    const int n_val = static_cast<int>(std::llround(0.1 * n));
    data.train_idx.assign(perm.begin(), perm.begin() + n_train);
    data.val_idx.assign(perm.begin() + n_train, perm.begin() + n_train + n_val);
    data.test_idx.assign(perm.begin() + n_train + n_val, perm.end());
}

void standardize(Dataset& data) {
    if (data.train_idx.empty()) throw std::invalid_argument("standardize: no train split");
    for (auto& view : data.views) {
        for (int c = 0; c < view.cols; ++c) {
            double sum = 0, sq = 0;
            for (int r : data.train_idx) {
                const double v = view(r, c);
                sum += v;
                sq += v * v;
            }
            const double mean = sum / data.train_idx.size();
            double var = sq / data.train_idx.size() - mean * mean;
            double sd = var > 1e-12 ? std::sqrt(var) : 1.0;
            for (int r = 0; r < view.rows; ++r)
                view(r, c) = static_cast<float>((view(r, c) - mean) / sd);
        }
    }
}

namespace {

void parse_log_file(const std::string& file, const MhealthOptions& opts,
                    std::vector<std::vector<float>>& rows, std::vector<int>& labels) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot open " + file);
    int max_col = opts.label_column;
    for (int c : opts.feature_columns) max_col = std::max(max_col, c);

    std::string line;
    long line_no = 0;
    std::vector<double> cols;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        cols.clear();
        const char* p = line.c_str();
        char* end = nullptr;
        while (*p) {
            double v = std::strtod(p, &end);
            if (end == p) break;
            cols.push_back(v);
            p = end;
        }
        while (*p == ' ' || *p == '\t' || *p == '\r') ++p;
        if (*p != '\0' || static_cast<int>(cols.size()) <= max_col)
            throw std::runtime_error("malformed row at " + file + ":" + std::to_string(line_no));

        const double raw = cols[opts.label_column];
        const int label = static_cast<int>(raw);
        if (raw != label || label < 0 || label > 12)
            throw std::runtime_error("unknown activity label " + std::to_string(raw) + " at " +
                                     file + ":" + std::to_string(line_no));
        if (label == 0) continue;  // unlabeled segment

        std::vector<float> feats(opts.feature_columns.size());
        for (size_t i = 0; i < opts.feature_columns.size(); ++i)
            feats[i] = static_cast<float>(cols[opts.feature_columns[i]]);
        rows.push_back(std::move(feats));
        labels.push_back(label - 1);
    }
}

}  // namespace

Dataset load_mhealth(const std::string& path, const MhealthOptions& opts_in) {
    MhealthOptions opts = opts_in;
    if (opts.feature_columns.empty()) {
        opts.feature_columns.resize(23);
        std::iota(opts.feature_columns.begin(), opts.feature_columns.end(), 0);
    }

    std::vector<std::string> files;
    if (fs::is_directory(path)) {
        for (const auto& entry : fs::directory_iterator(path))
            if (entry.is_regular_file()) files.push_back(entry.path().string());
        std::sort(files.begin(), files.end());
    } else if (fs::exists(path)) {
        files.push_back(path);
    } else {
        throw std::runtime_error("no such dataset path: " + path);
    }
    if (files.empty()) throw std::runtime_error("no log files under " + path);

    std::vector<std::vector<float>> rows;
    std::vector<int> labels;
    for (const auto& f : files) parse_log_file(f, opts, rows, labels);
    if (rows.empty()) throw std::runtime_error("no labeled rows under " + path);

    if (opts.max_rows > 0 && static_cast<int>(rows.size()) > opts.max_rows) {
        std::vector<int> keep(rows.size());
        std::iota(keep.begin(), keep.end(), 0);
        std::mt19937_64 rng(opts.split_seed ^ 0x9e3779b97f4a7c15ull);
        std::shuffle(keep.begin(), keep.end(), rng);
        keep.resize(opts.max_rows);
        std::sort(keep.begin(), keep.end());
        std::vector<std::vector<float>> sub_rows;
        std::vector<int> sub_labels;
        for (int i : keep) {
            sub_rows.push_back(std::move(rows[i]));
            sub_labels.push_back(labels[i]);
        }
        rows = std::move(sub_rows);
        labels = std::move(sub_labels);
    }

    Dataset data;
    data.class_count = 12;
    data.labels = std::move(labels);
    Mat<float> feats(static_cast<int>(rows.size()), static_cast<int>(opts.feature_columns.size()));
    for (size_t r = 0; r < rows.size(); ++r)
        std::copy(rows[r].begin(), rows[r].end(), feats.row(static_cast<int>(r)));
    data.views.push_back(std::move(feats));

    assign_splits(data, opts.split_seed);
    if (opts.standardize) standardize(data);
    return data;
}

Dataset synth_multiview(const SynthMultiViewSpec& spec) {
    if (spec.classes < 2 || spec.views < 1 || spec.view_dim < 1 || spec.instances < 3)
        throw std::invalid_argument("synth_multiview: bad spec");
    if (static_cast<int>(spec.class_skew.size()) != spec.classes)
        throw std::invalid_argument("synth_multiview: class_skew length != classes");

    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> proto_dist(-1.0, 1.0);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::discrete_distribution<int> label_dist(spec.class_skew.begin(), spec.class_skew.end());
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    // One fixed pattern per (class, view); instances are that pattern plus noise.
    std::vector<std::vector<std::vector<float>>> proto(spec.classes);
    for (int c = 0; c < spec.classes; ++c) {
        proto[c].resize(spec.views);
        for (int v = 0; v < spec.views; ++v) {
            proto[c][v].resize(spec.view_dim);
            for (int d = 0; d < spec.view_dim; ++d)
                proto[c][v][d] = static_cast<float>(proto_dist(rng));
        }
    }

    Dataset data;
    data.class_count = spec.classes;
    data.labels.resize(spec.instances);
    for (int v = 0; v < spec.views; ++v) data.views.emplace_back(spec.instances, spec.view_dim);

    for (int i = 0; i < spec.instances; ++i) {
        const int c = label_dist(rng);
        data.labels[i] = c;
        for (int v = 0; v < spec.views; ++v) {
            float* row = data.views[v].row(i);
            if (unit(rng) < spec.occlusion_rate) {
                std::fill(row, row + spec.view_dim, 0.0f);  // occluded: black frame
                continue;
            }
            for (int d = 0; d < spec.view_dim; ++d)
                row[d] = proto[c][v][d] + static_cast<float>(noise(rng));
        }
    }
    assign_splits(data, spec.split_seed);
    return data;
}

std::vector<double> class_weights(const Dataset& data) {
    if (data.train_idx.empty()) throw std::invalid_argument("class_weights: no train split");
    std::vector<long> counts(data.class_count, 0);
    for (int r : data.train_idx) ++counts[data.labels[r]];
    for (int c = 0; c < data.class_count; ++c)
        if (counts[c] == 0)
            throw std::invalid_argument("class_weights: class " + std::to_string(c) +
                                        " missing from train split");
    const double n = static_cast<double>(data.train_idx.size());
    const double k = data.class_count;
    std::vector<double> w(data.class_count);
    for (int c = 0; c < data.class_count; ++c) w[c] = n / (k * counts[c]);
    double mean = std::accumulate(w.begin(), w.end(), 0.0) / k;
    for (double& v : w) v /= mean;
    return w;
}

void save_dfgd(const Dataset& data, const std::string& path) {
    std::string out;
    out += "DFGD";
    put_u32(out, 1);  // format version
    put_u32(out, static_cast<uint32_t>(data.size()));
    put_u32(out, static_cast<uint32_t>(data.view_count()));
    put_u32(out, static_cast<uint32_t>(data.views.empty() ? 0 : data.views[0].cols));
    put_u32(out, static_cast<uint32_t>(data.class_count));
    for (const auto& view : data.views)
        for (float v : view.a) put_f32(out, v);
    for (int label : data.labels) put_u16(out, static_cast<uint16_t>(label));

    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + path);
    write_all(os, out);
}

Dataset load_dfgd(const std::string& path, uint64_t split_seed) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    ByteReader r(bytes);
    if (bytes.size() < 4 || bytes.compare(0, 4, "DFGD") != 0)
        throw std::runtime_error(path + ": not a DFGD container");
    r.u32();  // magic, already checked
    const uint32_t version = r.u32();
    if (version != 1) throw std::runtime_error(path + ": unsupported DFGD version");
    const uint32_t n = r.u32(), views = r.u32(), dim = r.u32(), classes = r.u32();

    Dataset data;
    data.class_count = static_cast<int>(classes);
    for (uint32_t v = 0; v < views; ++v) {
        Mat<float> m(static_cast<int>(n), static_cast<int>(dim));
        for (auto& x : m.a) x = r.f32();
        data.views.push_back(std::move(m));
    }
    data.labels.resize(n);
    for (auto& label : data.labels) {
        label = r.u16();
        if (label >= data.class_count) throw std::runtime_error(path + ": label out of range");
    }
    assign_splits(data, split_seed);
    return data;
}

std::map<std::string, Mat<float>> make_iot_inputs(const DistributedDnn& graph, const Dataset& data,
                                                  const std::vector<int>& rows) {
    const auto iot = graph.iot_ids();
    if (static_cast<int>(iot.size()) != data.view_count())
        throw std::invalid_argument("dataset has " + std::to_string(data.view_count()) +
                                    " views but topology has " + std::to_string(iot.size()) +
                                    " iot nodes");
    std::map<std::string, Mat<float>> inputs;
    for (size_t v = 0; v < iot.size(); ++v) {
        const Mat<float>& view = data.views[v];
        Mat<float> m(static_cast<int>(rows.size()), view.cols);
        for (size_t r = 0; r < rows.size(); ++r)
            std::copy(view.row(rows[r]), view.row(rows[r]) + view.cols, m.row(static_cast<int>(r)));
        inputs.emplace(iot[v], std::move(m));
    }
    return inputs;
}

std::vector<int> gather_labels(const Dataset& data, const std::vector<int>& rows) {
    std::vector<int> labels(rows.size());
    for (size_t i = 0; i < rows.size(); ++i) labels[i] = data.labels[rows[i]];
    return labels;
}

void write_synthetic_mhealth_corpus(const std::string& dir, int rows, int subjects, uint64_t seed) {
    fs::create_directories(dir);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> mean_dist(-1.5, 1.5);
    std::normal_distribution<double> noise(0.0, 1.2);
    std::uniform_int_distribution<int> label_dist(1, 12);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    // 12 activity clusters in the 23-feature space.
    std::vector<std::vector<double>> centers(12, std::vector<double>(23));
    for (auto& c : centers)
        for (double& v : c) v = mean_dist(rng);

    const int per_subject = rows / subjects;
    for (int s = 1; s <= subjects; ++s) {
        char name[64];
        std::snprintf(name, sizeof(name), "mHealth_subject%d.log", s);
        std::ofstream out(fs::path(dir) / name);
        if (!out) throw std::runtime_error("cannot write corpus under " + dir);
        const int n = s == subjects ? rows - per_subject * (subjects - 1) : per_subject;
        for (int i = 0; i < n; ++i) {
            const bool filler = unit(rng) < 0.03;  // unlabeled segments, dropped by the loader
            const int label = filler ? 0 : label_dist(rng);
            char buf[32];
            for (int d = 0; d < 23; ++d) {
                const double v = filler ? noise(rng) : centers[label - 1][d] + noise(rng);
                std::snprintf(buf, sizeof(buf), "%.6f\t", v);
                out << buf;
            }
            out << label << "\n";
        }
    }
}

}  // namespace dfg
