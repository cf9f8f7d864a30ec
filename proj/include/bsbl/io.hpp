#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "bsbl/experiments.hpp"

namespace bsbl {

// Doubles are serialized with 17 significant digits (%.17g): bit-faithful
// round-trip for every finite value.
std::string format_double(double v);

// Minimal ordered JSON object writer. Keys appear in insertion order and
// doubles go through format_double, so output bytes are a pure function of
// the values — the property the determinism guarantees rest on.
class JsonObjectBuilder {
public:
    JsonObjectBuilder& add(const std::string& key, const std::string& value);
    JsonObjectBuilder& add(const std::string& key, const char* value);
    JsonObjectBuilder& add(const std::string& key, std::int64_t value);
    JsonObjectBuilder& add(const std::string& key, std::uint64_t value);
    JsonObjectBuilder& add(const std::string& key, int value);
    JsonObjectBuilder& add(const std::string& key, double value);  // non-finite -> null
    JsonObjectBuilder& add(const std::string& key, bool value);
    JsonObjectBuilder& add_null(const std::string& key);
    JsonObjectBuilder& add_raw(const std::string& key, const std::string& rendered_json);

    std::string str() const;  // {"k":v,...}

private:
    std::string body_;
    void key(const std::string& k);
};

std::string json_escape(const std::string& s);

// --- Matrix / vector text files ---------------------------------------------
// Format: one header line "rows cols", then `rows` lines of `cols`
// space-separated values (row-major), 17 significant digits.

void write_matrix(const std::string& path, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix(const std::string& path);

void write_vector(const std::string& path, const Eigen::VectorXd& v);  // stored as n x 1
Eigen::VectorXd read_vector(const std::string& path);  // accepts n x 1 or 1 x n

// --- Trial records -----------------------------------------------------------
// Fixed field order: algorithm, seed, n, m, k_active, r, snr_db, nmse,
// runtime_s, success. Inapplicable fields serialize as null (JSONL) or empty
// (CSV). runtime_s is ALWAYS serialized as null/empty: wall-clock timing
// varies between reruns and records files must be byte-identical for a fixed
// base seed. Measured runtimes live in TrialRecord::runtime_seconds and are
// reported through the CLI's timing sidecar instead.

enum class record_format { jsonl, csv };

record_format record_format_from_name(const std::string& name);
const char* record_format_name(record_format format);

std::string csv_column_header();
std::string record_to_line(const TrialRecord& record, record_format format);
TrialRecord record_from_line(const std::string& line, record_format format);

// Streams records to a file, one line per record, flushed per line so a
// killed run leaves a salvageable prefix. The first line is a header block
// carrying the full resolved config: {"header": <config>} for JSONL, or a
// "# <config>" comment followed by the column-name line for CSV.
class RecordWriter {
public:
    RecordWriter(const std::string& path, record_format format, const std::string& config_json);
    RecordWriter(const RecordWriter&) = delete;
    RecordWriter& operator=(const RecordWriter&) = delete;

    void write(const TrialRecord& record);

private:
    std::ofstream out_;
    record_format format_;
};

struct RecordsFile {
    std::string config_json;  // header block's config object, raw text
    std::vector<TrialRecord> records;
};

RecordsFile read_records(const std::string& path, record_format format);

// Phase grid export: comma-separated success-rate matrix with axis headers
// (first column = M, header row = k_active values), preceded by one comment
// line with the grid geometry.
void write_grid(const std::string& path, const PhaseGrid& grid);

}  // namespace bsbl
