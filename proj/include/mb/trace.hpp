#pragma once

#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mb/error.hpp"
#include "mb/io.hpp"

namespace mb {

// One trained batch of the fused-target stage. rho_*_pre are the raw Eq-of-
// ratios values computed from auxiliary confidences; rho_* are the weights
// actually applied (clamped, or exactly 1 when regulation is off).
struct BatchTraceRow {
    int epoch = 0;
    int batch = 0;
    double loss_opt = 0.0;
    double loss_sar = 0.0;
    double loss_src = 0.0;
    double rho_opt_pre = 1.0;
    double rho_opt = 1.0;
    double rho_sar_pre = 1.0;
    double rho_sar = 1.0;
};

struct LossTrace {
    std::vector<BatchTraceRow> rows;
};

inline constexpr const char* kTraceHeader =
    "epoch,batch,loss_opt,loss_sar,loss_src,rho_opt_pre,rho_opt,rho_sar_pre,rho_sar";

inline std::string trace_to_csv(const LossTrace& trace) {
    std::string out = std::string(kTraceHeader) + "\n";
    char buf[256];
    for (const auto& r : trace.rows) {
        std::snprintf(buf, sizeof buf, "%d,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", r.epoch,
                      r.batch, r.loss_opt, r.loss_sar, r.loss_src, r.rho_opt_pre, r.rho_opt,
                      r.rho_sar_pre, r.rho_sar);
        out += buf;
    }
    return out;
}

inline void write_trace_csv(const std::filesystem::path& path, const LossTrace& trace) {
    write_text_file(path, trace_to_csv(trace));
}

inline LossTrace read_trace_csv(const std::filesystem::path& path) {
    const auto text = read_text_file(path);
    LossTrace trace;
    std::size_t pos = text.find('\n');
    if (pos == std::string::npos || text.substr(0, pos) != kTraceHeader)
        throw DataError("trace csv: bad header in " + path.string());
    ++pos;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        const std::string line = text.substr(pos, eol - pos);
        pos = eol + 1;
        if (line.empty()) continue;
        BatchTraceRow r;
        if (std::sscanf(line.c_str(), "%d,%d,%lf,%lf,%lf,%lf,%lf,%lf,%lf", &r.epoch, &r.batch,
                        &r.loss_opt, &r.loss_sar, &r.loss_src, &r.rho_opt_pre, &r.rho_opt,
                        &r.rho_sar_pre, &r.rho_sar) != 9)
            throw DataError("trace csv: bad row in " + path.string() + ": " + line);
        trace.rows.push_back(r);
    }
    return trace;
}

struct EpochMeans {
    std::vector<double> loss_opt;
    std::vector<double> loss_sar;
};

inline EpochMeans epoch_means(const LossTrace& trace) {
    std::map<int, std::pair<int, std::pair<double, double>>> acc;
    for (const auto& r : trace.rows) {
        auto& a = acc[r.epoch];
        ++a.first;
        a.second.first += r.loss_opt;
        a.second.second += r.loss_sar;
    }
    EpochMeans m;
    for (const auto& [epoch, a] : acc) {
        m.loss_opt.push_back(a.second.first / a.first);
        m.loss_sar.push_back(a.second.second / a.first);
    }
    return m;
}

// |norm_slope(loss_opt) - norm_slope(loss_sar)| with
// norm_slope = (first-epoch mean - last-epoch mean) / first-epoch mean.
// Zero when both losses decline by the same relative amount. Absent when a
// first-epoch mean is zero.
inline std::optional<double> descent_gap(const LossTrace& trace) {
    const auto m = epoch_means(trace);
    if (m.loss_opt.size() < 2) throw InvalidInputError("descent_gap: need at least 2 epochs");
    if (m.loss_opt.front() == 0.0 || m.loss_sar.front() == 0.0) return std::nullopt;
    const double slope_opt = (m.loss_opt.front() - m.loss_opt.back()) / m.loss_opt.front();
    const double slope_sar = (m.loss_sar.front() - m.loss_sar.back()) / m.loss_sar.front();
    return std::abs(slope_opt - slope_sar);
}

}  // namespace mb
