#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "eqlab/observations.hpp"
#include "eqlab/random.hpp"

using namespace eqlab;

namespace {

ObservationBatch parse_text(const std::string& text, const CsvSchema& schema) {
    std::istringstream in(text);
    return ingest_csv(in, schema);
}

CsvSchema growth_schema() { return {{"t", "c"}, "od"}; }

}  // namespace

TEST(Ingest, ReplicateStatistics) {
    const auto batch = parse_text("t,c,od_1,od_2,od_3\n0,10,0.41,0.43,0.42\n", growth_schema());
    ASSERT_EQ(batch.rows.size(), 1u);
    const Observation& obs = batch.rows[0];
    EXPECT_EQ(obs.features, (std::vector<double>{0.0, 10.0}));
    EXPECT_NEAR(obs.mean(), 0.42, 1e-15);
    // deviations -0.01, 0.01, 0: sum of squares 2e-4 over n - 1 = 2
    EXPECT_NEAR(obs.stddev(), 0.01, 1e-14);
}

TEST(Ingest, SingleReplicateAndColumnOrder) {
    const auto batch = parse_text("note,od,c,t\nfirst,0.5,20,100\nsecond,0.7,30,200\n", growth_schema());
    ASSERT_EQ(batch.rows.size(), 2u);
    EXPECT_EQ(batch.rows[1].features, (std::vector<double>{200.0, 30.0}));
    EXPECT_EQ(batch.rows[1].replicates, (std::vector<double>{0.7}));
    EXPECT_EQ(batch.rows[0].stddev(), 0.0);
}

TEST(Ingest, VariableReplicateCounts) {
    const auto batch = parse_text("t,c,od_1,od_2\r\n0,1,0.1,\r\n\r\n1,1,0.2,0.4\r\n", growth_schema());
    ASSERT_EQ(batch.rows.size(), 2u);
    EXPECT_EQ(batch.rows[0].replicates.size(), 1u);
    EXPECT_NEAR(batch.rows[1].mean(), 0.3, 1e-15);
}

TEST(Ingest, QuotedCells) {
    const auto batch = parse_text("t,c,od,comment\n\"5\",1,0.25,\"a, b\"\n", growth_schema());
    EXPECT_EQ(batch.rows[0].features[0], 5.0);
}

TEST(Ingest, MissingTargetNamesColumn) {
    try {
        parse_text("t,c,absorbance\n0,1,0.1\n", growth_schema());
        FAIL() << "expected IngestError";
    } catch (const IngestError& e) {
        ASSERT_EQ(e.issues().size(), 1u);
        EXPECT_NE(e.issues()[0].message.find("'od'"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("od"), std::string::npos);
    }
}

TEST(Ingest, MissingFeatureColumn) {
    try {
        parse_text("t,od\n0,0.1\n", growth_schema());
        FAIL() << "expected IngestError";
    } catch (const IngestError& e) {
        EXPECT_NE(e.issues()[0].message.find("'c'"), std::string::npos);
    }
}

TEST(Ingest, MalformedRowsCarryLineNumbers) {
    const std::string text =
        "t,c,od\n"
        "0,1,0.1\n"
        "1,abc,0.2\n"
        "2,1\n"
        "3,1,nan\n"
        "4,1,\n";
    try {
        parse_text(text, growth_schema());
        FAIL() << "expected IngestError";
    } catch (const IngestError& e) {
        ASSERT_EQ(e.issues().size(), 4u);
        EXPECT_EQ(e.issues()[0].line, 3u);
        EXPECT_NE(e.issues()[0].message.find("'c'"), std::string::npos);
        EXPECT_EQ(e.issues()[1].line, 4u);
        EXPECT_EQ(e.issues()[2].line, 5u);
        EXPECT_EQ(e.issues()[3].line, 6u);
        EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
    }
}

TEST(Ingest, EmptyInput) {
    EXPECT_THROW(parse_text("", growth_schema()), IngestError);
    EXPECT_THROW(parse_text("\n\n", growth_schema()), IngestError);
    EXPECT_THROW(parse_text("t,c,od\n", growth_schema()), IngestError);
    EXPECT_THROW(ingest_csv_file("/nonexistent/file.csv", growth_schema()), IngestError);
}

TEST(Ingest, ReplicateColumnMatching) {
    // "od_x" and "odd" are not replicate columns of "od"; only od_2 is.
    const auto batch = parse_text("t,c,od_x,odd,od_2\n0,1,9,9,0.5\n", growth_schema());
    EXPECT_EQ(batch.rows[0].replicates, (std::vector<double>{0.5}));
}

TEST(Augment, RowCountsAndCopies) {
    ObservationBatch batch;
    batch.feature_names = {"t", "c"};
    batch.rows.push_back({{1.0, 2.0}, {0.3}});
    Rng rng(1);
    const Dataset d = augment(batch, 10, rng);
    ASSERT_EQ(d.size(), 10u);
    for (std::size_t i = 0; i < d.size(); ++i) {
        EXPECT_EQ(d.y[i], 0.3);
        EXPECT_EQ(d.x(i, 0), 1.0);
        EXPECT_EQ(d.x(i, 1), 2.0);
    }
    EXPECT_THROW(augment(batch, 0, rng), std::invalid_argument);
}

TEST(Augment, SampleMeanWithinThreeStandardErrors) {
    ObservationBatch batch;
    batch.feature_names = {"c"};
    batch.rows.push_back({{10.0}, {0.41, 0.43, 0.42}});
    const double mu = batch.rows[0].mean();
    const double sigma = batch.rows[0].stddev();
    Rng rng(derive_seed(7, 0));
    const std::size_t k = 100000;
    const Dataset d = augment(batch, k, rng);
    double sum = 0.0;
    double ss = 0.0;
    for (double y : d.y) {
        sum += y;
    }
    const double mean = sum / static_cast<double>(k);
    for (double y : d.y) {
        ss += (y - mean) * (y - mean);
    }
    EXPECT_LT(std::fabs(mean - mu), 3.0 * sigma / std::sqrt(static_cast<double>(k)));
    EXPECT_NEAR(std::sqrt(ss / static_cast<double>(k - 1)), sigma, 0.01 * sigma);
}

TEST(Augment, DeterministicPerSeed) {
    ObservationBatch batch;
    batch.feature_names = {"c"};
    batch.rows.push_back({{1.0}, {1.0, 2.0}});
    batch.rows.push_back({{2.0}, {3.0, 5.0, 4.0}});
    Rng a(11);
    Rng b(11);
    EXPECT_EQ(augment(batch, 5, a).y, augment(batch, 5, b).y);
}

TEST(Means, OneRowPerObservation) {
    ObservationBatch batch;
    batch.feature_names = {"c"};
    batch.rows.push_back({{1.0}, {1.0, 2.0}});
    batch.rows.push_back({{2.0}, {4.0}});
    const Dataset d = means(batch);
    EXPECT_EQ(d.y, (std::vector<double>{1.5, 4.0}));
    EXPECT_EQ(d.names, (std::vector<std::string>{"c"}));
}
