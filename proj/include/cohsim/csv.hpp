#pragma once

// CSV and key-value report output.

#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <string>

#include "cohsim/engine.hpp"

namespace cohsim {

inline std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v == 0.0 ? 0.0 : v);  // no "-0"
    return buf;
}

/// `# units:` comment line, header row, one row per sample.
inline void write_csv(std::ostream& os, const TimeSeries& ts) {
    os << "# units: t_s=s";
    for (std::size_t c = 0; c < ts.width(); ++c) os << ", " << ts.names()[c] << '=' << ts.units()[c];
    os << "\nt_s";
    for (const auto& n : ts.names()) os << ',' << n;
    os << '\n';
    for (std::size_t r = 0; r < ts.size(); ++r) {
        os << format_number(ts.t[r]);
        for (std::size_t c = 0; c < ts.width(); ++c) os << ',' << format_number(ts.column(c)[r]);
        os << '\n';
    }
}

/// Flat key=value report; absent values print as "absent".
class MetricsReport {
  public:
    void set(const std::string& key, const std::string& value) { entries_[key] = value; }
    void set(const std::string& key, double value) { entries_[key] = format_number(value); }
    void set(const std::string& key, std::optional<double> value) {
        entries_[key] = value ? format_number(*value) : "absent";
    }
    void write(std::ostream& os) const {
        for (const auto& [k, v] : entries_) os << k << '=' << v << '\n';
    }
    const std::map<std::string, std::string>& entries() const { return entries_; }

  private:
    std::map<std::string, std::string> entries_;
};

}  // namespace cohsim
