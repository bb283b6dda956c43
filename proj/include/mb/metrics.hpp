#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mb/error.hpp"
#include "mb/io.hpp"

namespace mb {

// Rows are true classes, columns predictions.
struct ConfusionMatrix {
    int classes = 0;
    std::vector<std::int64_t> counts;

    explicit ConfusionMatrix(int m = 0)
        : classes(m), counts(static_cast<std::size_t>(m) * m, 0) {}

    std::int64_t& at(int truth, int pred) {
        return counts[static_cast<std::size_t>(truth) * classes + pred];
    }
    std::int64_t at(int truth, int pred) const {
        return counts[static_cast<std::size_t>(truth) * classes + pred];
    }
    std::int64_t total() const {
        std::int64_t n = 0;
        for (auto v : counts) n += v;
        return n;
    }
};

inline ConfusionMatrix confusion_matrix(const std::vector<int>& preds,
                                        const std::vector<int>& labels, int classes) {
    if (preds.size() != labels.size() || preds.empty())
        throw InvalidInputError("confusion_matrix: length mismatch or empty");
    ConfusionMatrix cm(classes);
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= classes || preds[i] < 0 || preds[i] >= classes)
            throw InvalidInputError("confusion_matrix: class index out of range at " +
                                    std::to_string(i));
        ++cm.at(labels[i], preds[i]);
    }
    return cm;
}

enum class SubsetTag { all, cloud_covered, cloud_free };

inline const char* subset_tag_name(SubsetTag t) {
    switch (t) {
        case SubsetTag::all: return "all";
        case SubsetTag::cloud_covered: return "cloud_covered";
        case SubsetTag::cloud_free: return "cloud_free";
    }
    return "?";
}

struct MetricsReport {
    double oa = 0.0;
    double aa = 0.0;
    double kappa = 0.0;
    std::vector<std::optional<double>> recalls;  // absent for classes with no true sample
    std::int64_t n = 0;
    SubsetTag subset = SubsetTag::all;
    bool degenerate_kappa = false;
};

// OA = trace/N; AA = mean recall over classes with at least one true sample;
// kappa = (p_o - p_e) / (1 - p_e), p_e = sum_k row_k col_k / N^2. The p_e = 1
// corner (all mass in one class on both margins) is defined as 1 if p_o = 1
// else 0, flagged as degenerate.
inline MetricsReport metrics(const ConfusionMatrix& cm, SubsetTag subset = SubsetTag::all) {
    const std::int64_t n = cm.total();
    if (n <= 0) throw InvalidInputError("metrics: empty confusion matrix");
    MetricsReport r;
    r.subset = subset;
    r.n = n;
    std::int64_t diag = 0;
    double pe = 0.0;
    double recall_sum = 0.0;
    int present = 0;
    r.recalls.resize(static_cast<std::size_t>(cm.classes));
    for (int c = 0; c < cm.classes; ++c) {
        std::int64_t row = 0, col = 0;
        for (int k = 0; k < cm.classes; ++k) {
            row += cm.at(c, k);
            col += cm.at(k, c);
        }
        diag += cm.at(c, c);
        pe += (static_cast<double>(row) / n) * (static_cast<double>(col) / n);
        if (row > 0) {
            const double rec = static_cast<double>(cm.at(c, c)) / row;
            r.recalls[static_cast<std::size_t>(c)] = rec;
            recall_sum += rec;
            ++present;
        }
    }
    r.oa = static_cast<double>(diag) / n;
    r.aa = present > 0 ? recall_sum / present : 0.0;
    if (pe >= 1.0) {
        r.degenerate_kappa = true;
        r.kappa = r.oa >= 1.0 ? 1.0 : 0.0;
    } else {
        r.kappa = (r.oa - pe) / (1.0 - pe);
    }
    return r;
}

// Independent reports for the cloud-covered and cloud-free subsets; an empty
// subset yields an absent report rather than zeros.
inline std::pair<std::optional<MetricsReport>, std::optional<MetricsReport>> subset_metrics(
    const std::vector<int>& preds, const std::vector<int>& labels,
    const std::vector<bool>& cloud_flags, int classes) {
    if (preds.size() != labels.size() || preds.size() != cloud_flags.size())
        throw InvalidInputError("subset_metrics: length mismatch");
    std::vector<int> p_cov, l_cov, p_free, l_free;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (cloud_flags[i]) {
            p_cov.push_back(preds[i]);
            l_cov.push_back(labels[i]);
        } else {
            p_free.push_back(preds[i]);
            l_free.push_back(labels[i]);
        }
    }
    std::pair<std::optional<MetricsReport>, std::optional<MetricsReport>> out;
    if (!p_cov.empty())
        out.first = metrics(confusion_matrix(p_cov, l_cov, classes), SubsetTag::cloud_covered);
    if (!p_free.empty())
        out.second = metrics(confusion_matrix(p_free, l_free, classes), SubsetTag::cloud_free);
    return out;
}

// Structured text report, 6 decimal places.
inline std::string format_metrics_report(const MetricsReport& r,
                                         const std::vector<std::string>& class_names) {
    std::string out;
    char buf[160];
    std::snprintf(buf, sizeof buf, "subset: %s\nn: %lld\n", subset_tag_name(r.subset),
                  static_cast<long long>(r.n));
    out += buf;
    std::snprintf(buf, sizeof buf, "oa: %.6f\naa: %.6f\nkappa: %.6f\n", r.oa, r.aa, r.kappa);
    out += buf;
    if (r.degenerate_kappa) out += "kappa_degenerate: true\n";
    for (std::size_t c = 0; c < r.recalls.size(); ++c) {
        const std::string name =
            c < class_names.size() ? class_names[c] : "class_" + std::to_string(c);
        if (r.recalls[c]) {
            std::snprintf(buf, sizeof buf, "recall %s: %.6f\n", name.c_str(), *r.recalls[c]);
            out += buf;
        } else {
            std::snprintf(buf, sizeof buf, "recall %s: absent\n", name.c_str());
            out += buf;
        }
    }
    return out;
}

inline void write_metrics_report(const std::filesystem::path& path, const MetricsReport& r,
                                 const std::vector<std::string>& class_names) {
    write_text_file(path, format_metrics_report(r, class_names));
}

}  // namespace mb
