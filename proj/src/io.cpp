#include "bsbl/io.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "bsbl/errors.hpp"

namespace bsbl {

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string json_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size() + 2);
    for (const char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default:
                if (static_cast<unsigned char>(c) < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof(buf), "\\u%04x", c);
                    out += buf;
                } else {
                    out += c;
                }
        }
    }
    return out;
}

void JsonObjectBuilder::key(const std::string& k) {
    if (!body_.empty()) {
        body_ += ',';
    }
    body_ += '"';
    body_ += json_escape(k);
    body_ += "\":";
}

JsonObjectBuilder& JsonObjectBuilder::add(const std::string& k, const std::string& v) {
    key(k);
    body_ += '"';
    body_ += json_escape(v);
    body_ += '"';
    return *this;
}

JsonObjectBuilder& JsonObjectBuilder::add(const std::string& k, const char* v) {
    return add(k, std::string(v));
}

JsonObjectBuilder& JsonObjectBuilder::add(const std::string& k, std::int64_t v) {
    key(k);
    body_ += std::to_string(v);
    return *this;
}

JsonObjectBuilder& JsonObjectBuilder::add(const std::string& k, std::uint64_t v) {
    key(k);
    body_ += std::to_string(v);
    return *this;
}

JsonObjectBuilder& JsonObjectBuilder::add(const std::string& k, int v) {
    return add(k, static_cast<std::int64_t>(v));
}

JsonObjectBuilder& JsonObjectBuilder::add(const std::string& k, double v) {
    key(k);
    body_ += std::isfinite(v) ? format_double(v) : std::string("null");
    return *this;
}

JsonObjectBuilder& JsonObjectBuilder::add(const std::string& k, bool v) {
    key(k);
    body_ += v ? "true" : "false";
    return *this;
}

JsonObjectBuilder& JsonObjectBuilder::add_null(const std::string& k) {
    key(k);
    body_ += "null";
    return *this;
}

JsonObjectBuilder& JsonObjectBuilder::add_raw(const std::string& k, const std::string& rendered) {
    key(k);
    body_ += rendered;
    return *this;
}

std::string JsonObjectBuilder::str() const {
    return "{" + body_ + "}";
}

// --- Matrix / vector files ---------------------------------------------------

void write_matrix(const std::string& path, const Eigen::MatrixXd& m) {
    std::ofstream out(path);
    if (!out) {
        throw invalid_input("cannot open for writing: " + path);
    }
    out << m.rows() << ' ' << m.cols() << '\n';
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j > 0) {
                out << ' ';
            }
            out << format_double(m(i, j));
        }
        out << '\n';
    }
    if (!out) {
        throw invalid_input("write failed: " + path);
    }
}

Eigen::MatrixXd read_matrix(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw invalid_input("cannot open for reading: " + path);
    }
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    if (!(in >> rows >> cols) || rows < 1 || cols < 1) {
        throw invalid_input("malformed matrix header in " + path + " (expected 'rows cols')");
    }
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) {
            if (!(in >> m(i, j))) {
                std::ostringstream msg;
                msg << "matrix file " << path << " ended early (expected " << rows * cols
                    << " values)";
                throw invalid_input(msg.str());
            }
        }
    }
    double extra = 0.0;
    if (in >> extra) {
        throw invalid_input("matrix file " + path + " has trailing values");
    }
    return m;
}

void write_vector(const std::string& path, const Eigen::VectorXd& v) {
    write_matrix(path, v);
}

Eigen::VectorXd read_vector(const std::string& path) {
    const Eigen::MatrixXd m = read_matrix(path);
    if (m.cols() == 1) {
        return m.col(0);
    }
    if (m.rows() == 1) {
        return m.row(0).transpose();
    }
    throw invalid_input("vector file " + path + " must have a single row or column");
}

// --- Trial records -----------------------------------------------------------

record_format record_format_from_name(const std::string& name) {
    if (name == "jsonl") {
        return record_format::jsonl;
    }
    if (name == "csv") {
        return record_format::csv;
    }
    throw invalid_input("unknown record format: " + name + " (expected jsonl or csv)");
}

const char* record_format_name(record_format format) {
    return format == record_format::jsonl ? "jsonl" : "csv";
}

std::string csv_column_header() {
    return "algorithm,seed,n,m,k_active,r,snr_db,nmse,runtime_s,success";
}

std::string record_to_line(const TrialRecord& r, record_format format) {
    if (format == record_format::jsonl) {
        JsonObjectBuilder b;
        b.add("algorithm", r.algorithm);
        b.add("seed", r.seed);
        b.add("n", r.n);
        b.add("m", r.m);
        if (r.k_active) {
            b.add("k_active", *r.k_active);
        } else {
            b.add_null("k_active");
        }
        if (r.r) {
            b.add("r", *r.r);
        } else {
            b.add_null("r");
        }
        if (r.snr_db) {
            b.add("snr_db", *r.snr_db);
        } else {
            b.add_null("snr_db");
        }
        b.add("nmse", r.nmse);
        b.add_null("runtime_s");  // never serialized; see io.hpp
        b.add("success", r.success);
        return b.str();
    }
    std::ostringstream out;
    out << r.algorithm << ',' << r.seed << ',' << r.n << ',' << r.m << ',';
    if (r.k_active) {
        out << *r.k_active;
    }
    out << ',';
    if (r.r) {
        out << format_double(*r.r);
    }
    out << ',';
    if (r.snr_db) {
        out << format_double(*r.snr_db);
    }
    out << ',' << format_double(r.nmse) << ',';
    // runtime_s column stays empty; see io.hpp.
    out << ',' << (r.success ? "true" : "false");
    return out.str();
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    for (const char c : line) {
        if (c == ',') {
            fields.push_back(field);
            field.clear();
        } else {
            field += c;
        }
    }
    fields.push_back(field);
    return fields;
}

}  // namespace

TrialRecord record_from_line(const std::string& line, record_format format) {
    TrialRecord r;
    if (format == record_format::jsonl) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw invalid_input(std::string("malformed record line: ") + e.what());
        }
        try {
            r.algorithm = j.at("algorithm").get<std::string>();
            r.seed = j.at("seed").get<std::uint64_t>();
            r.n = j.at("n").get<int>();
            r.m = j.at("m").get<int>();
            if (!j.at("k_active").is_null()) {
                r.k_active = j.at("k_active").get<int>();
            }
            if (!j.at("r").is_null()) {
                r.r = j.at("r").get<double>();
            }
            if (!j.at("snr_db").is_null()) {
                r.snr_db = j.at("snr_db").get<double>();
            }
            r.nmse = j.at("nmse").get<double>();
            if (!j.at("runtime_s").is_null()) {
                r.runtime_seconds = j.at("runtime_s").get<double>();
            }
            r.success = j.at("success").get<bool>();
        } catch (const nlohmann::json::exception& e) {
            throw invalid_input(std::string("record line missing fields: ") + e.what());
        }
        return r;
    }
    const std::vector<std::string> f = split_csv(line);
    if (f.size() != 10) {
        throw invalid_input("malformed CSV record line (expected 10 fields)");
    }
    try {
        r.algorithm = f[0];
        r.seed = std::stoull(f[1]);
        r.n = std::stoi(f[2]);
        r.m = std::stoi(f[3]);
        if (!f[4].empty()) {
            r.k_active = std::stoi(f[4]);
        }
        if (!f[5].empty()) {
            r.r = std::stod(f[5]);
        }
        if (!f[6].empty()) {
            r.snr_db = std::stod(f[6]);
        }
        r.nmse = std::stod(f[7]);
        if (!f[8].empty()) {
            r.runtime_seconds = std::stod(f[8]);
        }
        if (f[9] == "true") {
            r.success = true;
        } else if (f[9] == "false") {
            r.success = false;
        } else {
            throw invalid_input("malformed CSV success field: " + f[9]);
        }
    } catch (const std::logic_error&) {
        throw invalid_input("malformed CSV record line: " + line);
    }
    return r;
}

RecordWriter::RecordWriter(const std::string& path, record_format format,
                           const std::string& config_json)
    : out_(path), format_(format) {
    if (!out_) {
        throw invalid_input("cannot open for writing: " + path);
    }
    if (format_ == record_format::jsonl) {
        out_ << "{\"header\":" << config_json << "}\n";
    } else {
        out_ << "# " << config_json << '\n' << csv_column_header() << '\n';
    }
    out_.flush();
}

void RecordWriter::write(const TrialRecord& record) {
    out_ << record_to_line(record, format_) << '\n';
    out_.flush();
    if (!out_) {
        throw invalid_input("record write failed");
    }
}

RecordsFile read_records(const std::string& path, record_format format) {
    std::ifstream in(path);
    if (!in) {
        throw invalid_input("cannot open for reading: " + path);
    }
    RecordsFile file;
    std::string line;
    bool first = true;
    bool expect_columns = false;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        if (first) {
            first = false;
            if (format == record_format::jsonl) {
                nlohmann::json j;
                try {
                    j = nlohmann::json::parse(line);
                } catch (const nlohmann::json::exception& e) {
                    throw invalid_input(std::string("malformed header line: ") + e.what());
                }
                if (!j.contains("header")) {
                    throw invalid_input("records file is missing its header block");
                }
                file.config_json = j.at("header").dump();
                continue;
            }
            if (line.rfind("# ", 0) != 0) {
                throw invalid_input("records file is missing its header block");
            }
            file.config_json = line.substr(2);
            expect_columns = true;
            continue;
        }
        if (expect_columns) {
            if (line != csv_column_header()) {
                throw invalid_input("unexpected CSV column header: " + line);
            }
            expect_columns = false;
            continue;
        }
        file.records.push_back(record_from_line(line, format));
    }
    if (first) {
        throw invalid_input("records file is empty: " + path);
    }
    return file;
}

void write_grid(const std::string& path, const PhaseGrid& grid) {
    std::ofstream out(path);
    if (!out) {
        throw invalid_input("cannot open for writing: " + path);
    }
    JsonObjectBuilder geom;
    geom.add("n", grid.n).add("d", grid.d).add("trials", grid.trials);
    out << "# " << geom.str() << '\n';
    out << "m\\k";
    for (const int k : grid.k_values) {
        out << ',' << k;
    }
    out << '\n';
    for (std::size_t mi = 0; mi < grid.m_values.size(); ++mi) {
        out << grid.m_values[mi];
        for (std::size_t ki = 0; ki < grid.k_values.size(); ++ki) {
            out << ','
                << format_double(grid.success(static_cast<Eigen::Index>(mi),
                                              static_cast<Eigen::Index>(ki)));
        }
        out << '\n';
    }
    if (!out) {
        throw invalid_input("write failed: " + path);
    }
}

}  // namespace bsbl
