#include "eqlab/observations.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>

namespace eqlab {

namespace {

std::string trim(std::string s) {
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    return s;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cell += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cell += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(trim(cell));
            cell.clear();
        } else {
            cell += c;
        }
    }
    out.push_back(trim(cell));
    return out;
}

std::optional<double> parse_number(const std::string& s) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (first != last && *first == '+') {
        ++first;
    }
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
        return std::nullopt;
    }
    return v;
}

bool is_replicate_column(const std::string& header, const std::string& target) {
    if (header == target) {
        return true;
    }
    if (header.size() <= target.size() + 1 || header.compare(0, target.size(), target) != 0 ||
        header[target.size()] != '_') {
        return false;
    }
    return std::all_of(header.begin() + static_cast<std::ptrdiff_t>(target.size()) + 1, header.end(),
                       [](unsigned char c) { return std::isdigit(c); });
}

std::string describe_issues(const std::vector<CsvIssue>& issues) {
    std::ostringstream out;
    out << "CSV ingestion failed";
    for (std::size_t i = 0; i < issues.size() && i < 5; ++i) {
        out << (i == 0 ? ": " : "; ");
        if (issues[i].line > 0) {
            out << "line " << issues[i].line << ": ";
        }
        out << issues[i].message;
    }
    if (issues.size() > 5) {
        out << "; and " << issues.size() - 5 << " more";
    }
    return out.str();
}

}  // namespace

double Observation::mean() const {
    if (replicates.empty()) {
        return 0.0;
    }
    return std::accumulate(replicates.begin(), replicates.end(), 0.0) / static_cast<double>(replicates.size());
}

double Observation::stddev() const {
    if (replicates.size() < 2) {
        return 0.0;
    }
    const double mu = mean();
    double ss = 0.0;
    for (double v : replicates) {
        ss += (v - mu) * (v - mu);
    }
    return std::sqrt(ss / static_cast<double>(replicates.size() - 1));
}

IngestError::IngestError(std::vector<CsvIssue> issues)
    : std::runtime_error(describe_issues(issues)), issues_(std::move(issues)) {}

ObservationBatch ingest_csv(std::istream& in, const CsvSchema& schema) {
    if (schema.features.empty()) {
        throw IngestError({{0, "schema lists no feature columns"}});
    }
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (!trim(line).empty()) {
            header = split_csv_line(line);
            break;
        }
    }
    if (header.empty()) {
        throw IngestError({{0, "file is empty"}});
    }

    std::vector<CsvIssue> issues;
    std::vector<std::size_t> feature_cols;
    for (const auto& f : schema.features) {
        const auto it = std::find(header.begin(), header.end(), f);
        if (it == header.end()) {
            issues.push_back({line_no, "missing feature column '" + f + "'"});
        } else {
            feature_cols.push_back(static_cast<std::size_t>(it - header.begin()));
        }
    }
    std::vector<std::size_t> target_cols;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (is_replicate_column(header[c], schema.target)) {
            target_cols.push_back(c);
        }
    }
    if (target_cols.empty()) {
        issues.push_back({line_no, "missing target column '" + schema.target + "'"});
    }
    if (!issues.empty()) {
        throw IngestError(std::move(issues));
    }

    ObservationBatch batch;
    batch.feature_names = schema.features;
    batch.target_name = schema.target;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (trim(line).empty()) {
            continue;
        }
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            issues.push_back({line_no, "expected " + std::to_string(header.size()) + " cells, found " +
                                           std::to_string(cells.size())});
            continue;
        }
        Observation obs;
        bool ok = true;
        for (std::size_t k = 0; k < feature_cols.size(); ++k) {
            const auto v = parse_number(cells[feature_cols[k]]);
            if (!v) {
                issues.push_back({line_no, "column '" + schema.features[k] + "': '" + cells[feature_cols[k]] +
                                               "' is not a finite number"});
                ok = false;
            } else {
                obs.features.push_back(*v);
            }
        }
        for (std::size_t c : target_cols) {
            if (cells[c].empty()) {
                continue;
            }
            const auto v = parse_number(cells[c]);
            if (!v) {
                issues.push_back({line_no, "column '" + header[c] + "': '" + cells[c] + "' is not a finite number"});
                ok = false;
            } else {
                obs.replicates.push_back(*v);
            }
        }
        if (ok && obs.replicates.empty()) {
            issues.push_back({line_no, "no replicate values for '" + schema.target + "'"});
            ok = false;
        }
        if (ok) {
            batch.rows.push_back(std::move(obs));
        }
    }
    if (!issues.empty()) {
        throw IngestError(std::move(issues));
    }
    if (batch.rows.empty()) {
        throw IngestError({{line_no, "file has a header but no data rows"}});
    }
    return batch;
}

ObservationBatch ingest_csv_file(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) {
        throw IngestError({{0, "cannot open '" + path + "'"}});
    }
    return ingest_csv(in, schema);
}

Dataset augment(const ObservationBatch& batch, std::size_t k, Rng& rng) {
    if (k < 1) {
        throw std::invalid_argument("augmentation count must be >= 1");
    }
    const std::size_t dims = batch.feature_names.size();
    Dataset d;
    d.names = batch.feature_names;
    d.x = Matrix(batch.rows.size() * k, dims);
    d.y.reserve(batch.rows.size() * k);
    std::size_t r = 0;
    for (const auto& obs : batch.rows) {
        const double mu = obs.mean();
        const double sd = obs.stddev();
        std::normal_distribution<double> n(0.0, 1.0);
        for (std::size_t i = 0; i < k; ++i, ++r) {
            for (std::size_t c = 0; c < dims; ++c) {
                d.x(r, c) = obs.features[c];
            }
            d.y.push_back(sd > 0.0 ? mu + sd * n(rng) : mu);
        }
    }
    return d;
}

Dataset means(const ObservationBatch& batch) {
    const std::size_t dims = batch.feature_names.size();
    Dataset d;
    d.names = batch.feature_names;
    d.x = Matrix(batch.rows.size(), dims);
    for (std::size_t r = 0; r < batch.rows.size(); ++r) {
        for (std::size_t c = 0; c < dims; ++c) {
            d.x(r, c) = batch.rows[r].features[c];
        }
        d.y.push_back(batch.rows[r].mean());
    }
    return d;
}

}  // namespace eqlab
