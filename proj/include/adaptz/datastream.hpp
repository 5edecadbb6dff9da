#pragma once

// Series ingestion, chronological splits, sliding windows, and synthetic
// drift generators.

#include <adaptz/forecaster.hpp>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace adaptz {

struct SeriesFrame {
    Matrix values;  // T x C
    std::vector<std::string> names;

    std::size_t length() const noexcept { return values.rows(); }
    std::size_t channels() const noexcept { return values.cols(); }
};

class DataError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline bool parse_double(std::string_view s, double& out) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    if (s.empty()) return false;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

// Header row, first column is a timestamp/index and is ignored, remaining
// columns are real values. Rows are kept in file order.
inline SeriesFrame read_csv(std::istream& in, const std::string& source = "<stream>") {
    std::string line;
    if (!std::getline(in, line)) throw DataError(source + ": empty file");
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
        static_cast<unsigned char>(line[1]) == 0xBB && static_cast<unsigned char>(line[2]) == 0xBF)
        line.erase(0, 3);
    const auto header = detail::split_fields(line);
    if (header.size() < 2) throw DataError(source + ": header needs a timestamp and at least one value column");
    SeriesFrame f;
    for (std::size_t i = 1; i < header.size(); ++i) f.names.emplace_back(detail::trim(header[i]));
    const std::size_t C = f.names.size();

    std::vector<double> data;
    std::size_t rows = 0, line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const auto fields = detail::split_fields(line);
        if (fields.size() != C + 1) {
            throw DataError(source + ": row " + std::to_string(line_no) + " has " +
                            std::to_string(fields.size()) + " fields, expected " +
                            std::to_string(C + 1));
        }
        for (std::size_t c = 0; c < C; ++c) {
            double v = 0.0;
            if (!detail::parse_double(fields[c + 1], v)) {
                throw DataError(source + ": row " + std::to_string(line_no) + ", column '" +
                                f.names[c] + "': cannot parse '" + std::string(fields[c + 1]) + "'");
            }
            data.push_back(v);
        }
        ++rows;
    }
    if (rows == 0) throw DataError(source + ": no data rows");
    f.values = Matrix(rows, C, std::move(data));
    return f;
}

inline SeriesFrame load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    return read_csv(in, path);
}

inline void write_csv(std::ostream& out, const SeriesFrame& f) {
    out << "t";
    for (std::size_t c = 0; c < f.channels(); ++c) {
        out << ',' << (c < f.names.size() ? f.names[c] : "c" + std::to_string(c));
    }
    out << '\n';
    for (std::size_t t = 0; t < f.length(); ++t) {
        out << t;
        for (std::size_t c = 0; c < f.channels(); ++c) out << ',' << detail::format_double(f.values(t, c));
        out << '\n';
    }
}

inline void write_csv(const std::string& path, const SeriesFrame& f) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    write_csv(out, f);
}

// ---- windows and splits ----

// x covers [origin - L + 1, origin], y covers [origin + 1, origin + k].
inline Sample make_sample(const SeriesFrame& f, std::int64_t origin, std::size_t L, std::size_t k) {
    const std::size_t C = f.channels();
    const auto o = static_cast<std::size_t>(origin);
    if (origin + 1 < static_cast<std::int64_t>(L) || o + k >= f.length()) {
        throw std::out_of_range("make_sample: origin " + std::to_string(origin) + " out of range");
    }
    Sample s{Matrix(L, C), Matrix(k, C), origin};
    for (std::size_t t = 0; t < L; ++t)
        for (std::size_t c = 0; c < C; ++c) s.x(t, c) = f.values(o + 1 - L + t, c);
    for (std::size_t t = 0; t < k; ++t)
        for (std::size_t c = 0; c < C; ++c) s.y(t, c) = f.values(o + 1 + t, c);
    return s;
}

struct SplitSpec {
    double train_frac = 0.60;
    double val_frac = 0.10;
    double test_frac = 0.30;
};

struct OriginRange {
    std::int64_t first = 0;  // inclusive
    std::int64_t last = -1;  // inclusive; empty when last < first

    std::size_t count() const noexcept {
        return last < first ? 0 : static_cast<std::size_t>(last - first + 1);
    }
};

struct SplitBounds {
    std::size_t train_end = 0;  // floor(train_frac * T)
    std::size_t val_end = 0;    // floor((train_frac + val_frac) * T)
    OriginRange train, val, test;
};

// Every sample's target rows stay inside its own split; lookback windows may
// reach back into earlier splits.
inline SplitBounds split_bounds(std::size_t T, const SplitSpec& spec, std::size_t L, std::size_t k) {
    const double sum = spec.train_frac + spec.val_frac + spec.test_frac;
    if (spec.train_frac < 0 || spec.val_frac < 0 || spec.test_frac < 0 || std::abs(sum - 1.0) > 1e-9) {
        throw std::invalid_argument("SplitSpec: fractions must be non-negative and sum to 1");
    }
    if (T < L + k + 10) {
        throw std::invalid_argument("chrono_split: series of length " + std::to_string(T) +
                                    " too short; need at least L + k + 10 = " +
                                    std::to_string(L + k + 10));
    }
    SplitBounds b;
    b.train_end = static_cast<std::size_t>(std::floor(spec.train_frac * static_cast<double>(T) + 1e-9));
    b.val_end = static_cast<std::size_t>(
        std::floor((spec.train_frac + spec.val_frac) * static_cast<double>(T) + 1e-9));
    b.train_end = std::min(b.train_end, T);
    b.val_end = std::min(std::max(b.val_end, b.train_end), T);
    const auto Li = static_cast<std::int64_t>(L), ki = static_cast<std::int64_t>(k);
    auto range = [&](std::size_t start, std::size_t end) {
        // targets in [start, end): origin + 1 >= start, origin + k <= end - 1
        OriginRange r;
        r.first = std::max<std::int64_t>(Li - 1, static_cast<std::int64_t>(start) - 1);
        r.last = static_cast<std::int64_t>(end) - 1 - ki;
        return r;
    };
    b.train = range(0, b.train_end);
    b.val = range(b.train_end, b.val_end);
    b.test = range(b.val_end, T);
    return b;
}

struct SplitSamples {
    std::vector<Sample> train, val, test;
};

inline std::vector<Sample> make_samples(const SeriesFrame& f, OriginRange r, std::size_t L, std::size_t k) {
    std::vector<Sample> out;
    out.reserve(r.count());
    for (std::int64_t o = r.first; o <= r.last; ++o) out.push_back(make_sample(f, o, L, k));
    return out;
}

inline SplitSamples chrono_split(const SeriesFrame& f, const SplitSpec& spec, std::size_t L, std::size_t k) {
    const SplitBounds b = split_bounds(f.length(), spec, L, k);
    return {make_samples(f, b.train, L, k), make_samples(f, b.val, L, k), make_samples(f, b.test, L, k)};
}

// ---- synthetic generators ----

enum class DriftKind { mean_shift, concept_drift };

struct DriftSpec {
    DriftKind kind = DriftKind::mean_shift;
    std::vector<std::size_t> change_points;
    std::vector<double> magnitudes;
    double ar_coeff = 0.9;
    double noise_std = 0.1;
    std::size_t channels = 3;
    std::size_t length = 2000;
    std::uint64_t seed = 2025;
    // concept_drift only: per-step linear trend of every driver channel and the
    // lag between drivers and the target channel.
    double trend = 0.0;
    std::size_t lag = 1;
};

inline void validate(const DriftSpec& s) {
    if (s.length == 0 || s.channels == 0) throw std::invalid_argument("DriftSpec: length and channels must be positive");
    if (!(s.ar_coeff > -1.0 && s.ar_coeff < 1.0)) throw std::invalid_argument("DriftSpec: ar_coeff must lie in (-1, 1)");
    if (s.noise_std < 0) throw std::invalid_argument("DriftSpec: noise_std must be >= 0");
    if (s.change_points.size() != s.magnitudes.size()) {
        throw std::invalid_argument("DriftSpec: change_points and magnitudes differ in length");
    }
    for (std::size_t i = 0; i < s.change_points.size(); ++i) {
        if (s.change_points[i] >= s.length) throw std::invalid_argument("DriftSpec: change point outside [0, T)");
        if (i > 0 && s.change_points[i] <= s.change_points[i - 1]) {
            throw std::invalid_argument("DriftSpec: change points must be strictly increasing");
        }
    }
    if (s.kind == DriftKind::concept_drift && s.channels < 2) {
        throw std::invalid_argument("DriftSpec: concept_drift needs at least one driver and one target channel");
    }
}

namespace detail {

// Stationary AR(1) path: u_0 ~ N(0, sigma^2 / (1 - phi^2)).
inline std::vector<double> ar1_path(std::size_t T, double phi, double sigma, std::mt19937_64& rng) {
    std::normal_distribution<double> n01(0.0, 1.0);
    std::vector<double> u(T);
    double prev = sigma / std::sqrt(1.0 - phi * phi) * n01(rng);
    for (std::size_t t = 0; t < T; ++t) {
        if (t > 0) prev = phi * prev + sigma * n01(rng);
        u[t] = prev;
    }
    return u;
}

}  // namespace detail

// AR(1) noise around a piecewise-constant level; at each change point the level
// of every channel jumps by the matching magnitude.
inline SeriesFrame gen_mean_shift(const DriftSpec& spec) {
    validate(spec);
    std::mt19937_64 rng(spec.seed);
    SeriesFrame f{Matrix(spec.length, spec.channels), {}};
    for (std::size_t c = 0; c < spec.channels; ++c) {
        f.names.push_back("c" + std::to_string(c));
        const auto u = detail::ar1_path(spec.length, spec.ar_coeff, spec.noise_std, rng);
        double level = 0.0;
        std::size_t next = 0;
        for (std::size_t t = 0; t < spec.length; ++t) {
            while (next < spec.change_points.size() && spec.change_points[next] == t) level += spec.magnitudes[next++];
            f.values(t, c) = level + u[t];
        }
    }
    return f;
}

// Initial driver coefficients of gen_concept_drift, U(0.5, 1.5) from the seed.
inline std::vector<double> concept_drift_coefficients(const DriftSpec& spec) {
    std::mt19937_64 rng(spec.seed ^ 0x9E3779B97F4A7C15ULL);
    std::uniform_real_distribution<double> u(0.5, 1.5);
    std::vector<double> beta(spec.channels - 1);
    for (double& b : beta) b = u(rng);
    return beta;
}

// Channels 0..C-2 are drivers (AR(1) noise plus a linear trend); the last
// channel is sum_j beta_j(t) * driver_j(t - lag) + noise. At change point i
// coefficient (i mod drivers) is multiplied by magnitudes[i].
inline SeriesFrame gen_concept_drift(const DriftSpec& spec) {
    validate(spec);
    const std::size_t T = spec.length, D = spec.channels - 1;
    std::vector<double> beta = concept_drift_coefficients(spec);
    std::mt19937_64 rng(spec.seed);
    SeriesFrame f{Matrix(T, spec.channels), {}};
    for (std::size_t j = 0; j < D; ++j) {
        f.names.push_back("driver" + std::to_string(j));
        const auto u = detail::ar1_path(T, spec.ar_coeff, spec.noise_std, rng);
        for (std::size_t t = 0; t < T; ++t) f.values(t, j) = spec.trend * static_cast<double>(t) + u[t];
    }
    f.names.push_back("target");
    std::normal_distribution<double> n01(0.0, 1.0);
    std::size_t next = 0;
    for (std::size_t t = 0; t < T; ++t) {
        while (next < spec.change_points.size() && spec.change_points[next] == t) {
            beta[next % D] *= spec.magnitudes[next];
            ++next;
        }
        const std::size_t src = t >= spec.lag ? t - spec.lag : 0;
        double v = 0.0;
        for (std::size_t j = 0; j < D; ++j) v += beta[j] * f.values(src, j);
        f.values(t, D) = v + spec.noise_std * n01(rng);
    }
    return f;
}

inline SeriesFrame generate(const DriftSpec& spec) {
    return spec.kind == DriftKind::mean_shift ? gen_mean_shift(spec) : gen_concept_drift(spec);
}

}  // namespace adaptz
