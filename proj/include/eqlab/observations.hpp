#pragma once

#include <cstddef>
#include <istream>
#include <stdexcept>
#include <string>
#include <vector>

#include "eqlab/matrix.hpp"
#include "eqlab/random.hpp"

namespace eqlab {

/// One experimental setting with its replicate measurements.
struct Observation {
    std::vector<double> features;
    std::vector<double> replicates;

    double mean() const;
    /// Sample standard deviation (n - 1); 0 for a single replicate.
    double stddev() const;
};

struct ObservationBatch {
    std::vector<std::string> feature_names;
    std::string target_name = "y";
    std::vector<Observation> rows;
};

/// Column contract for CSV ingestion: the listed feature columns plus one or
/// more replicate columns named `target` or `target_<n>`. Other columns are ignored.
struct CsvSchema {
    std::vector<std::string> features;
    std::string target = "y";
};

struct CsvIssue {
    std::size_t line = 0;  ///< 1-based, 0 for file-level problems
    std::string message;
};

class IngestError : public std::runtime_error {
public:
    explicit IngestError(std::vector<CsvIssue> issues);
    const std::vector<CsvIssue>& issues() const { return issues_; }

private:
    std::vector<CsvIssue> issues_;
};

/// Parses a CSV stream. Every malformed row is reported (with its line number)
/// in one IngestError; schema problems and empty input are reported at line 0 or 1.
ObservationBatch ingest_csv(std::istream& in, const CsvSchema& schema);
ObservationBatch ingest_csv_file(const std::string& path, const CsvSchema& schema);

/// k draws from Normal(mean, stddev) per observation, appended in row order.
Dataset augment(const ObservationBatch& batch, std::size_t k, Rng& rng);

/// One row per observation labeled with its replicate mean.
Dataset means(const ObservationBatch& batch);

}  // namespace eqlab
