#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include <e2eso/common.hpp>
#include <e2eso/nnet.hpp>
#include <e2eso/rng.hpp>
#include <e2eso/solvers.hpp>

namespace e2eso::scenarios {

/**
 * Data generation and ingestion: the hierarchical Gaussian sampler, the
 * Dirichlet-categorical demand sampler, a synthetic wind process, CSV
 * ingestion of real wind/weather records, and windowed observation
 * construction for the dispatch experiments.
 *
 * Every sampler here is a pure function of (seed, index): drawing index k
 * never depends on having drawn indices 0..k-1, so random access equals
 * sequential access and concurrent draws are safe. The one exception is
 * the autoregressive wind process, which is sequential by nature; it
 * instead guarantees prefix stability (extending the stream never changes
 * earlier records).
 */

// ----------------------------------------------------------------------
// Hierarchical Gaussian: Z ~ N(mean, var_prior), then X components and Y
// i.i.d. N(Z, var_obs). X and Y use disjoint random streams given the
// draw index, so they are conditionally independent given Z by
// construction, and skipping the Y draw cannot shift the X draw.
// ----------------------------------------------------------------------

struct GaussianDraw {
    Vec x;     ///< num_samples observations of the latent mean
    double y;  ///< the out-of-sample outcome, same conditional law as x[i]
    double z;  ///< the latent mean itself
};

class GaussianSampler {
  public:
    /// Unlike the posterior computation, the sampler accepts a degenerate
    /// observation noise of zero (every draw then equals the latent mean).
    GaussianSampler(solvers::GaussianHierarchy h, std::uint64_t seed)
        : h_(h), seed_(seed) {
        if (!(h_.var_prior > 0.0) || !(h_.var_obs >= 0.0) || h_.num_samples < 1)
            throw ConfigError("GaussianSampler: invalid hierarchy parameters");
    }

    const solvers::GaussianHierarchy& hierarchy() const { return h_; }
    std::uint64_t seed() const { return seed_; }

    double draw_z(std::uint64_t index) const {
        return Rng::at(seed_, kStreamZ, index)
            .normal(h_.mean_prior, std::sqrt(h_.var_prior));
    }

    /// Observation components given the latent mean, without the Y draw.
    Vec draw_x(std::uint64_t index, double z) const {
        Rng rng = Rng::at(seed_, kStreamX, index);
        const double sd = std::sqrt(h_.var_obs);
        Vec x(static_cast<std::size_t>(h_.num_samples));
        for (double& v : x)
            v = rng.normal(z, sd);
        return x;
    }

    double draw_y(std::uint64_t index, double z) const {
        return Rng::at(seed_, kStreamY, index).normal(z, std::sqrt(h_.var_obs));
    }

    GaussianDraw draw(std::uint64_t index) const {
        const double z = draw_z(index);
        return {draw_x(index, z), draw_y(index, z), z};
    }

  private:
    static constexpr std::uint64_t kStreamZ = 0;
    static constexpr std::uint64_t kStreamX = 1;
    static constexpr std::uint64_t kStreamY = 2;

    solvers::GaussianHierarchy h_;
    std::uint64_t seed_;
};

// ----------------------------------------------------------------------
// Dirichlet-categorical demand: Z ~ Dirichlet(alpha) is a distribution
// over d demand levels; X = N i.i.d. levels drawn from Z; Y one more
// level drawn from Z on a disjoint stream.
// ----------------------------------------------------------------------

struct NewsvendorDraw {
    std::vector<int> x;  ///< N demand levels in 1..d
    int y;               ///< out-of-sample demand level
    Vec z;               ///< the latent level distribution
};

class NewsvendorSampler {
  public:
    /**
     * @param prior      Dirichlet prior over the d-simplex.
     * @param n          observation size N (history length).
     * @param seed       stream seed.
     * @param group_size draws sharing index/group_size share one Z; 1
     *                   gives fully independent draws. Grouping models
     *                   batch protocols that reuse each latent sample for
     *                   several observations.
     */
    NewsvendorSampler(solvers::DirichletPrior prior, std::size_t n,
                      std::uint64_t seed, std::size_t group_size = 1)
        : prior_(std::move(prior)), n_(n), seed_(seed), group_(group_size) {
        solvers::validate(prior_);
        if (n_ == 0)
            throw ConfigError("NewsvendorSampler: observation size must be positive");
        if (group_ == 0)
            throw ConfigError("NewsvendorSampler: group size must be positive");
    }

    std::size_t levels() const { return prior_.alpha.size(); }
    std::size_t observation_size() const { return n_; }

    Vec draw_z(std::uint64_t index) const {
        Rng rng = Rng::at(seed_, kStreamZ, index / group_);
        return dirichlet(rng, prior_.alpha);
    }

    std::vector<int> draw_x(std::uint64_t index, const Vec& z) const {
        Rng rng = Rng::at(seed_, kStreamX, index);
        std::vector<int> x(n_);
        for (int& level : x)
            x_level(rng, z, level);
        return x;
    }

    int draw_y(std::uint64_t index, const Vec& z) const {
        Rng rng = Rng::at(seed_, kStreamY, index);
        int level = 0;
        x_level(rng, z, level);
        return level;
    }

    NewsvendorDraw draw(std::uint64_t index) const {
        Vec z = draw_z(index);
        std::vector<int> x = draw_x(index, z);
        int y = draw_y(index, z);
        return {std::move(x), y, std::move(z)};
    }

  private:
    static constexpr std::uint64_t kStreamZ = 0;
    static constexpr std::uint64_t kStreamX = 1;
    static constexpr std::uint64_t kStreamY = 2;

    static void x_level(Rng& rng, const Vec& z, int& out) {
        out = 1 + static_cast<int>(rng.categorical(z));
    }

    solvers::DirichletPrior prior_;
    std::size_t n_;
    std::uint64_t seed_;
    std::size_t group_;
};

/// Demand-level counts normalized by the observation size: the feature
/// encoding fed to neural decision maps (a sufficient statistic of X
/// under the exchangeable demand model).
inline Vec level_histogram(const std::vector<int>& levels, std::size_t d) {
    Vec h(d, 0.0);
    for (int level : levels) {
        if (level < 1 || static_cast<std::size_t>(level) > d)
            throw DomainError("level_histogram: level out of range");
        h[static_cast<std::size_t>(level - 1)] += 1.0;
    }
    const double n = static_cast<double>(levels.size());
    for (double& v : h)
        v /= n;
    return h;
}

// ----------------------------------------------------------------------
// Wind records: real or synthetic 10-minute weather/power history.
// ----------------------------------------------------------------------

struct WindRecord {
    std::int64_t timestamp = 0;   ///< epoch seconds, strictly increasing
    double active_power = 0.0;    ///< produced power, in [0, capacity]
    double wind_speed = 0.0;
    double wind_direction = 0.0;  ///< degrees in [0, 360)
    double temperature = 0.0;
};

/**
 * Synthetic wind farm model. Wind speed follows a stationary AR(1)
 * process with a mild diurnal component; temperature follows a diurnal
 * cycle; direction drifts as a wrapped random walk and modulates the
 * effective speed, so that direction alone carries a little predictive
 * signal and the full weather triple carries much more. Power is a
 * logistic curve of effective speed, clipped to [0, capacity] after
 * observation noise.
 */
struct WindModel {
    double capacity = 2.0;
    double speed_mean = 7.0;
    double speed_rho = 0.97;        ///< AR(1) coefficient per 10-minute step
    double speed_noise = 0.55;      ///< innovation standard deviation
    double speed_diurnal_amp = 0.5;
    double temp_base = 15.0;
    double temp_diurnal_amp = 6.0;
    double temp_noise = 0.5;
    double direction_center = 200.0;  ///< favored direction, degrees
    double direction_drift = 4.0;     ///< random-walk step sd, degrees
    double direction_gain = 0.1;      ///< speed modulation amplitude
    double curve_steepness = 0.9;     ///< logistic slope in speed units
    double power_noise = 0.15;
    std::size_t steps_per_day = 144;  ///< 10-minute steps per diurnal cycle
    std::int64_t start_timestamp = 1514764800;  ///< 2018-01-01 00:00:00 UTC
    std::int64_t step_seconds = 600;
};

/// Noise-free logistic power curve at a given effective wind speed.
inline double wind_power_curve(const WindModel& m, double effective_speed) {
    const double u = m.curve_steepness * (effective_speed - m.speed_mean);
    return m.capacity * nnet::stable_sigmoid(u);
}

/**
 * Generates `count` records of the synthetic process. Prefix-stable: the
 * first n records of wind_synthetic(m, seed, count) equal
 * wind_synthetic(m, seed, n) exactly, because the innovation for step t
 * is indexed by t rather than drawn from a shared running generator.
 */
inline std::vector<WindRecord> wind_synthetic(const WindModel& m, std::uint64_t seed,
                                              std::size_t count) {
    if (count == 0)
        throw ConfigError("wind_synthetic: count must be positive");
    if (m.capacity <= 0.0 || m.speed_noise < 0.0 || m.power_noise < 0.0 ||
        m.steps_per_day == 0 || m.step_seconds <= 0)
        throw ConfigError("wind_synthetic: invalid model parameters");

    constexpr std::uint64_t kStreamSpeed = 10;
    constexpr std::uint64_t kStreamTemp = 11;
    constexpr std::uint64_t kStreamDir = 12;
    constexpr std::uint64_t kStreamPower = 13;
    constexpr double kPi = 3.14159265358979323846;

    std::vector<WindRecord> out;
    out.reserve(count);
    // Stationary initialization so early records are not transient.
    const double stationary_sd =
        m.speed_noise / std::sqrt(std::max(1.0 - m.speed_rho * m.speed_rho, 1e-12));
    double speed_dev = Rng::at(seed, kStreamSpeed, 0).normal(0.0, stationary_sd);
    double direction = Rng::at(seed, kStreamDir, 0).uniform(0.0, 360.0);

    for (std::size_t t = 0; t < count; ++t) {
        if (t > 0) {
            speed_dev = m.speed_rho * speed_dev +
                        Rng::at(seed, kStreamSpeed, t).normal(0.0, m.speed_noise);
            direction += Rng::at(seed, kStreamDir, t).normal(0.0, m.direction_drift);
            direction = std::fmod(direction, 360.0);
            if (direction < 0.0)
                direction += 360.0;
        }
        const double phase =
            2.0 * kPi * static_cast<double>(t % m.steps_per_day) /
            static_cast<double>(m.steps_per_day);
        const double speed =
            std::max(0.0, m.speed_mean + speed_dev + m.speed_diurnal_amp * std::sin(phase));
        const double temperature =
            m.temp_base + m.temp_diurnal_amp * std::sin(phase) +
            Rng::at(seed, kStreamTemp, t).normal(0.0, m.temp_noise);
        const double alignment =
            std::cos((direction - m.direction_center) * kPi / 180.0);
        const double effective = speed * (1.0 + m.direction_gain * alignment);
        double power = wind_power_curve(m, effective) +
                       Rng::at(seed, kStreamPower, t).normal(0.0, m.power_noise);
        power = std::clamp(power, 0.0, m.capacity);

        WindRecord rec;
        rec.timestamp = m.start_timestamp + m.step_seconds * static_cast<std::int64_t>(t);
        rec.active_power = power;
        rec.wind_speed = speed;
        rec.wind_direction = direction;
        rec.temperature = temperature;
        out.push_back(rec);
    }
    return out;
}

// ----------------------------------------------------------------------
// CSV ingestion.
// ----------------------------------------------------------------------

/**
 * Maps dataset header names onto WindRecord fields, since real datasets
 * name their columns freely. power_scale rescales the power column (for
 * example onto a capacity-2 unit system) and values are clamped to
 * [0, power_clamp_max] after scaling when power_clamp_max > 0.
 */
struct ColumnMap {
    std::string timestamp = "timestamp";
    std::string active_power = "active_power";
    std::string wind_speed = "wind_speed";
    std::string wind_direction = "wind_direction";
    std::string temperature = "temperature";
    char delimiter = ',';
    double power_scale = 1.0;
    double power_clamp_max = 0.0;  ///< 0 disables clamping
};

inline ColumnMap column_map_from_json(const nlohmann::json& j) {
    ColumnMap map;
    try {
        if (j.contains("timestamp")) map.timestamp = j.at("timestamp").get<std::string>();
        if (j.contains("active_power")) map.active_power = j.at("active_power").get<std::string>();
        if (j.contains("wind_speed")) map.wind_speed = j.at("wind_speed").get<std::string>();
        if (j.contains("wind_direction"))
            map.wind_direction = j.at("wind_direction").get<std::string>();
        if (j.contains("temperature")) map.temperature = j.at("temperature").get<std::string>();
        if (j.contains("delimiter")) {
            const auto d = j.at("delimiter").get<std::string>();
            if (d.size() != 1)
                throw FormatError("column map: delimiter must be a single character");
            map.delimiter = d[0];
        }
        if (j.contains("power_scale")) map.power_scale = j.at("power_scale").get<double>();
        if (j.contains("power_clamp_max"))
            map.power_clamp_max = j.at("power_clamp_max").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("column map: ") + e.what());
    }
    if (map.power_scale <= 0.0)
        throw FormatError("column map: power_scale must be positive");
    return map;
}

struct IngestReport {
    std::vector<WindRecord> records;
    std::size_t dropped_count = 0;
    std::size_t raw_count = 0;  ///< data rows seen; records + dropped = raw
};

namespace detail {

inline std::vector<std::string> split_line(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, delim))
        out.push_back(field);
    if (!line.empty() && line.back() == delim)
        out.emplace_back();
    return out;
}

inline std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos)
        return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

inline bool parse_double(const std::string& raw, double& out) {
    const std::string s = trim(raw);
    if (s.empty())
        return false;
    try {
        std::size_t pos = 0;
        out = std::stod(s, &pos);
        return pos == s.size() && std::isfinite(out);
    } catch (...) {
        return false;
    }
}

/// Days since civil epoch 1970-01-01 (Howard Hinnant's algorithm).
inline std::int64_t days_from_civil(int y, int mo, int d) {
    y -= mo <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy =
        (153u * static_cast<unsigned>(mo + (mo > 2 ? -3 : 9)) + 2u) / 5u +
        static_cast<unsigned>(d) - 1u;
    const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

/**
 * Parses either an integer epoch-seconds value or a calendar timestamp of
 * the form "YYYY-MM-DD HH:MM[:SS]" ('T' separator accepted, any timezone
 * suffix after the seconds is ignored).
 */
inline bool parse_timestamp(const std::string& raw, std::int64_t& out) {
    const std::string s = trim(raw);
    if (s.empty())
        return false;
    if (s.find_first_not_of("+-0123456789") == std::string::npos) {
        try {
            std::size_t pos = 0;
            out = std::stoll(s, &pos);
            return pos == s.size();
        } catch (...) {
            return false;
        }
    }
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
    if (s.size() < 16 || s[4] != '-' || s[7] != '-' || (s[10] != ' ' && s[10] != 'T') ||
        s[13] != ':')
        return false;
    try {
        y = std::stoi(s.substr(0, 4));
        mo = std::stoi(s.substr(5, 2));
        d = std::stoi(s.substr(8, 2));
        h = std::stoi(s.substr(11, 2));
        mi = std::stoi(s.substr(14, 2));
        if (s.size() >= 19 && s[16] == ':')
            sec = std::stoi(s.substr(17, 2));
    } catch (...) {
        return false;
    }
    if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || sec > 59)
        return false;
    out = days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + sec;
    return true;
}

}  // namespace detail

/**
 * Parses a headed CSV of wind records. Rows with missing fields,
 * unparseable numbers, non-finite values, or non-increasing timestamps
 * are dropped and counted; parsing never reorders rows, so
 * records.size() + dropped_count == raw_count always holds.
 *
 * @throws IoError     when the file cannot be opened.
 * @throws FormatError when the header lacks a mapped column, naming it.
 */
inline IngestReport ingest_wind_csv(const std::string& path, const ColumnMap& map = {}) {
    std::ifstream in(path);
    if (!in)
        throw IoError("cannot open CSV file: " + path);

    std::string line;
    if (!std::getline(in, line))
        throw FormatError("CSV file has no header row: " + path);
    const std::vector<std::string> header = detail::split_line(line, map.delimiter);

    auto find_col = [&](const std::string& name) {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (detail::trim(header[i]) == name)
                return i;
        throw FormatError("CSV header is missing column '" + name + "' in " + path);
    };
    const std::size_t col_ts = find_col(map.timestamp);
    const std::size_t col_power = find_col(map.active_power);
    const std::size_t col_speed = find_col(map.wind_speed);
    const std::size_t col_dir = find_col(map.wind_direction);
    const std::size_t col_temp = find_col(map.temperature);

    IngestReport report;
    std::int64_t last_ts = std::numeric_limits<std::int64_t>::min();
    while (std::getline(in, line)) {
        if (detail::trim(line).empty())
            continue;
        ++report.raw_count;
        const std::vector<std::string> fields = detail::split_line(line, map.delimiter);
        WindRecord rec;
        const std::size_t needed =
            std::max({col_ts, col_power, col_speed, col_dir, col_temp});
        bool ok = fields.size() > needed &&
                  detail::parse_timestamp(fields[col_ts], rec.timestamp) &&
                  detail::parse_double(fields[col_power], rec.active_power) &&
                  detail::parse_double(fields[col_speed], rec.wind_speed) &&
                  detail::parse_double(fields[col_dir], rec.wind_direction) &&
                  detail::parse_double(fields[col_temp], rec.temperature);
        if (ok) {
            rec.active_power *= map.power_scale;
            if (map.power_clamp_max > 0.0)
                rec.active_power = std::clamp(rec.active_power, 0.0, map.power_clamp_max);
            ok = rec.active_power >= 0.0 && rec.timestamp > last_ts;
        }
        if (!ok) {
            ++report.dropped_count;
            continue;
        }
        last_ts = rec.timestamp;
        report.records.push_back(rec);
    }
    return report;
}

/// Writes records in the canonical header layout accepted by the default
/// ColumnMap, with integer epoch timestamps.
inline void write_wind_csv(const std::vector<WindRecord>& records, const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw IoError("cannot open CSV file for writing: " + path);
    out << "timestamp,active_power,wind_speed,wind_direction,temperature\n";
    out.precision(17);
    for (const WindRecord& r : records)
        out << r.timestamp << ',' << r.active_power << ',' << r.wind_speed << ','
            << r.wind_direction << ',' << r.temperature << '\n';
    if (!out)
        throw IoError("failed while writing CSV file: " + path);
}

/**
 * Keeps every (frequency/10)-th record, starting with the first, to model
 * reading the 10-minute stream only every 10/30/60 minutes.
 */
inline std::vector<WindRecord> thin_records(const std::vector<WindRecord>& records,
                                            int frequency_minutes) {
    if (frequency_minutes != 10 && frequency_minutes != 30 && frequency_minutes != 60)
        throw ConfigError("thin_records: frequency must be 10, 30, or 60 minutes");
    const std::size_t stride = static_cast<std::size_t>(frequency_minutes / 10);
    std::vector<WindRecord> out;
    out.reserve(records.size() / stride + 1);
    for (std::size_t i = 0; i < records.size(); i += stride)
        out.push_back(records[i]);
    return out;
}

/// Chronological split: the first ceil(fraction * n) records train, the
/// rest test.
inline std::pair<std::vector<WindRecord>, std::vector<WindRecord>>
split_records(const std::vector<WindRecord>& records, double train_fraction) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ConfigError("split_records: train fraction must lie strictly in (0, 1)");
    const std::size_t cut = static_cast<std::size_t>(
        std::ceil(train_fraction * static_cast<double>(records.size())));
    std::vector<WindRecord> train(records.begin(), records.begin() + static_cast<std::ptrdiff_t>(cut));
    std::vector<WindRecord> test(records.begin() + static_cast<std::ptrdiff_t>(cut), records.end());
    return {std::move(train), std::move(test)};
}

/// Splits at a calendar boundary: records with timestamp <= boundary
/// train, later records test.
inline std::pair<std::vector<WindRecord>, std::vector<WindRecord>>
split_records_at(const std::vector<WindRecord>& records, std::int64_t boundary_timestamp) {
    std::vector<WindRecord> train, test;
    for (const WindRecord& r : records)
        (r.timestamp <= boundary_timestamp ? train : test).push_back(r);
    return {std::move(train), std::move(test)};
}

// ----------------------------------------------------------------------
// Observation construction for the dispatch experiments.
// ----------------------------------------------------------------------

enum class ObservationKind {
    myopic,             ///< (temperature, speed, direction) now: dim 3
    myopic_incomplete,  ///< direction only: dim 1
    historical,         ///< myopic now + (temp, speed, dir, power) at the
                        ///< last two timesteps: dim 11
    lag_power,          ///< last observed power only: dim 1 (baseline input)
};

inline const char* observation_kind_name(ObservationKind k) {
    switch (k) {
        case ObservationKind::myopic: return "myopic";
        case ObservationKind::myopic_incomplete: return "myopic_incomplete";
        case ObservationKind::historical: return "historical";
        case ObservationKind::lag_power: return "lag_power";
    }
    throw ContractError("observation_kind_name: unknown kind");
}

inline ObservationKind observation_kind_from_name(const std::string& name) {
    if (name == "myopic") return ObservationKind::myopic;
    if (name == "myopic_incomplete") return ObservationKind::myopic_incomplete;
    if (name == "historical") return ObservationKind::historical;
    if (name == "lag_power") return ObservationKind::lag_power;
    throw FormatError("unknown observation kind: " + name);
}

struct ObservationSpec {
    ObservationKind kind = ObservationKind::myopic;

    std::size_t lags() const {
        switch (kind) {
            case ObservationKind::historical: return 2;
            case ObservationKind::lag_power: return 0;
            default: return 0;
        }
    }
    std::size_t feature_dim() const {
        switch (kind) {
            case ObservationKind::myopic: return 3;
            case ObservationKind::myopic_incomplete: return 1;
            case ObservationKind::historical: return 11;
            case ObservationKind::lag_power: return 1;
        }
        throw ContractError("ObservationSpec: unknown kind");
    }
};

struct ObservationRow {
    std::size_t record_index;  ///< index t of the decision time in the record list
    Vec x;                     ///< features available at time t
    double y;                  ///< power over the decided interval: record t+1
};

/**
 * Builds supervised rows from a chronological record list: features from
 * records up to time t, target the power at t+1 (the interval being
 * decided). Rows lacking enough history for the observation spec are
 * skipped. An optional min_start pins the first decision index so
 * different observation specs can be evaluated over identical intervals.
 */
inline std::vector<ObservationRow> build_observations(const std::vector<WindRecord>& records,
                                                      const ObservationSpec& spec,
                                                      std::size_t min_start = 0) {
    std::vector<ObservationRow> rows;
    if (records.size() < 2)
        return rows;
    const std::size_t start = std::max(spec.lags(), min_start);
    for (std::size_t t = start; t + 1 < records.size(); ++t) {
        const WindRecord& now = records[t];
        Vec x;
        switch (spec.kind) {
            case ObservationKind::myopic:
                x = {now.temperature, now.wind_speed, now.wind_direction};
                break;
            case ObservationKind::myopic_incomplete:
                x = {now.wind_direction};
                break;
            case ObservationKind::historical: {
                x = {now.temperature, now.wind_speed, now.wind_direction};
                for (std::size_t lag = 1; lag <= 2; ++lag) {
                    const WindRecord& past = records[t - lag];
                    x.push_back(past.temperature);
                    x.push_back(past.wind_speed);
                    x.push_back(past.wind_direction);
                    x.push_back(past.active_power);
                }
                break;
            }
            case ObservationKind::lag_power:
                x = {now.active_power};
                break;
        }
        rows.push_back({t, std::move(x), records[t + 1].active_power});
    }
    return rows;
}

/// Normalization transform fitted on training rows: (x - mean) / sd per
/// feature, with sd floored away from zero. Deterministic, and applied
/// identically at train and test time.
struct FeatureScaler {
    Vec mean;
    Vec scale;

    static FeatureScaler fit(const std::vector<ObservationRow>& rows) {
        if (rows.empty())
            throw DomainError("FeatureScaler: no rows to fit");
        const std::size_t dim = rows[0].x.size();
        FeatureScaler s;
        s.mean.assign(dim, 0.0);
        s.scale.assign(dim, 0.0);
        for (const ObservationRow& r : rows) {
            if (r.x.size() != dim)
                throw DomainError("FeatureScaler: inconsistent feature dims");
            for (std::size_t j = 0; j < dim; ++j)
                s.mean[j] += r.x[j];
        }
        for (double& v : s.mean)
            v /= static_cast<double>(rows.size());
        for (const ObservationRow& r : rows)
            for (std::size_t j = 0; j < dim; ++j) {
                const double d = r.x[j] - s.mean[j];
                s.scale[j] += d * d;
            }
        for (double& v : s.scale) {
            v = std::sqrt(v / static_cast<double>(rows.size()));
            if (v < 1e-9)
                v = 1.0;
        }
        return s;
    }

    Vec apply(const Vec& x) const {
        if (x.size() != mean.size())
            throw DomainError("FeatureScaler: feature dim mismatch");
        Vec out(x.size());
        for (std::size_t j = 0; j < x.size(); ++j)
            out[j] = (x[j] - mean[j]) / scale[j];
        return out;
    }
};

}  // namespace e2eso::scenarios
