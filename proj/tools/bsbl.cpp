#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "bsbl/baselines.hpp"
#include "bsbl/errors.hpp"
#include "bsbl/experiments.hpp"
#include "bsbl/io.hpp"
#include "bsbl/model.hpp"
#include "bsbl/solver.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 2;     // configuration / input error
constexpr int kExitNumerical = 3;   // numerical degeneracy
constexpr int kExitNotConverged = 4;  // solve --strict only

bsbl::CorrelationModel parse_model(const std::string& name) {
    if (name == "sim") {
        return bsbl::CorrelationModel::sim();
    }
    if (name == "ar1") {
        return bsbl::CorrelationModel::ar1();
    }
    if (name == "ar1-avg") {
        return bsbl::CorrelationModel::ar1_averaged();
    }
    throw bsbl::invalid_input("unknown model: " + name + " (expected sim, ar1, or ar1-avg)");
}

bsbl::BetaMode parse_beta_mode(const std::string& name) {
    if (name == "noiseless") {
        return bsbl::BetaMode::noiseless();
    }
    if (name == "low-snr") {
        return bsbl::BetaMode::low_snr();
    }
    if (name == "high-snr") {
        return bsbl::BetaMode::high_snr();
    }
    if (name.rfind("fixed:", 0) == 0) {
        double value = 0.0;
        try {
            value = std::stod(name.substr(6));
        } catch (const std::logic_error&) {
            throw bsbl::invalid_input("malformed beta mode: " + name);
        }
        return bsbl::BetaMode::fixed(value);
    }
    throw bsbl::invalid_input("unknown beta mode: " + name +
                              " (expected noiseless, low-snr, high-snr, or fixed:<float>)");
}

std::vector<int> parse_int_list(const std::string& text, const std::string& what) {
    std::vector<int> values;
    std::stringstream stream(text);
    std::string item;
    while (std::getline(stream, item, ',')) {
        try {
            values.push_back(std::stoi(item));
        } catch (const std::logic_error&) {
            throw bsbl::invalid_input("malformed " + what + " list: " + text);
        }
    }
    if (values.empty()) {
        throw bsbl::invalid_input(what + " list must be non-empty");
    }
    return values;
}

std::string render_int_list(const std::vector<int>& values) {
    std::string out = "[";
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i > 0) {
            out += ',';
        }
        out += std::to_string(values[i]);
    }
    return out + "]";
}

std::string render_string_list(const std::vector<std::string>& values) {
    std::string out = "[";
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i > 0) {
            out += ',';
        }
        out += '"' + bsbl::json_escape(values[i]) + '"';
    }
    return out + "]";
}

// Measured wall-clock runtimes are deliberately kept out of records files
// (those must be byte-identical across reruns); this sidecar receives them.
void write_timings(const std::string& path, const std::vector<bsbl::TrialRecord>& records) {
    if (path.empty()) {
        return;
    }
    std::ofstream out(path);
    if (!out) {
        throw bsbl::invalid_input("cannot open for writing: " + path);
    }
    out << "# wall-clock seconds around the recovery call; not reproducible\n";
    out << "algorithm,seed,runtime_s\n";
    for (const auto& r : records) {
        out << r.algorithm << ',' << r.seed << ',' << bsbl::format_double(r.runtime_seconds)
            << '\n';
    }
}

void print_runtime_summary(const std::vector<bsbl::TrialRecord>& records) {
    std::map<std::string, std::pair<double, int>> by_algo;
    for (const auto& r : records) {
        auto& [total, count] = by_algo[r.algorithm];
        total += r.runtime_seconds;
        count += 1;
    }
    for (const auto& [algo, stat] : by_algo) {
        std::cerr << "  " << algo << ": mean runtime "
                  << stat.first / std::max(1, stat.second) << " s over " << stat.second
                  << " runs\n";
    }
}

// --- solve -------------------------------------------------------------------

struct SolveArgs {
    std::string matrix_file;
    std::string observation_file;
    std::string binary_sensing;  // "MxNxK"
    int blocks = 0;
    std::string partition_list;
    std::string model = "ar1";
    std::string beta_mode = "high-snr";
    double eta = 1e-4;
    int max_iters = 1000;
    std::uint64_t seed = 1;
    std::string out = "solve_result.json";
    bool strict = false;
};

int run_solve(SolveArgs args) {
    // With a generated matrix there is no matrix file, so a single positional
    // is the observation.
    if (!args.binary_sensing.empty() && args.observation_file.empty()) {
        std::swap(args.matrix_file, args.observation_file);
    }
    if (args.observation_file.empty()) {
        throw bsbl::invalid_input("an observation file is required");
    }
    Eigen::MatrixXd phi;
    if (!args.binary_sensing.empty()) {
        if (!args.matrix_file.empty()) {
            throw bsbl::invalid_input("give either a matrix file or --binary-sensing, not both");
        }
        int m = 0, n = 0, ones = 0;
        char x1 = 0, x2 = 0;
        std::istringstream spec(args.binary_sensing);
        if (!(spec >> m >> x1 >> n >> x2 >> ones) || x1 != 'x' || x2 != 'x' || spec.peek() != EOF) {
            throw bsbl::invalid_input("malformed --binary-sensing (expected MxNxK, e.g. 256x512x12)");
        }
        phi = bsbl::gen_sparse_binary_matrix(m, n, ones, args.seed);
    } else {
        if (args.matrix_file.empty()) {
            throw bsbl::invalid_input("a sensing matrix file (or --binary-sensing) is required");
        }
        phi = bsbl::read_matrix(args.matrix_file);
    }
    const Eigen::VectorXd y = bsbl::read_vector(args.observation_file);

    if ((args.blocks > 0) == !args.partition_list.empty()) {
        throw bsbl::invalid_input("give exactly one of --blocks or --partition");
    }
    std::optional<bsbl::BlockPartition> partition;
    if (args.blocks > 0) {
        if (phi.cols() % args.blocks != 0) {
            throw bsbl::invalid_input("--blocks must divide the signal length");
        }
        partition = bsbl::BlockPartition::uniform(args.blocks,
                                                  static_cast<int>(phi.cols()) / args.blocks);
    } else {
        partition = bsbl::BlockPartition(parse_int_list(args.partition_list, "partition"));
    }

    bsbl::SolverOptions options;
    options.model = parse_model(args.model);
    options.beta_mode = parse_beta_mode(args.beta_mode);
    options.eta = args.eta;
    options.max_iters = args.max_iters;

    const bsbl::RecoveryResult result = bsbl::solve(phi, y, *partition, options);

    bsbl::JsonObjectBuilder header;
    header.add("command", "solve");
    if (!args.binary_sensing.empty()) {
        header.add("binary_sensing", args.binary_sensing).add("seed", args.seed);
    } else {
        header.add("matrix", args.matrix_file);
    }
    header.add("observation", args.observation_file);
    if (args.blocks > 0) {
        header.add("blocks", args.blocks);
    } else {
        header.add("partition", args.partition_list);
    }
    header.add("model", args.model)
        .add("beta_mode", args.beta_mode)
        .add("eta", args.eta)
        .add("max_iters", args.max_iters)
        .add("strict", args.strict);

    std::string active = "[";
    for (std::size_t i = 0; i < result.active.size(); ++i) {
        active += (i > 0 ? "," : "") + std::to_string(result.active[i]);
    }
    active += "]";
    std::string trace = "[";
    for (std::size_t i = 0; i < result.cost_trace.size(); ++i) {
        trace += (i > 0 ? "," : "") + bsbl::format_double(result.cost_trace[i]);
    }
    trace += "]";
    std::string x = "[";
    for (Eigen::Index i = 0; i < result.x.size(); ++i) {
        x += (i > 0 ? "," : "") + bsbl::format_double(result.x(i));
    }
    x += "]";

    bsbl::JsonObjectBuilder doc;
    doc.add_raw("header", header.str())
        .add("converged", result.converged)
        .add("iterations", result.iterations)
        .add("beta", result.beta)
        .add_raw("active", active)
        .add_raw("cost_trace", trace)
        .add_raw("x", x);

    std::ofstream out(args.out);
    if (!out) {
        throw bsbl::invalid_input("cannot open for writing: " + args.out);
    }
    out << doc.str() << '\n';
    if (!out) {
        throw bsbl::invalid_input("write failed: " + args.out);
    }

    std::cout << (result.converged ? "converged" : "stopped at max_iters") << " after "
              << result.iterations << " actions; " << result.active.size()
              << " active blocks; result written to " << args.out << '\n';
    if (args.strict && !result.converged) {
        return kExitNotConverged;
    }
    return kExitOk;
}

// --- phase -------------------------------------------------------------------

struct PhaseArgs {
    int n = 500;
    int g = 20;
    double r = 0.95;
    std::string m_list = "50,100,150,200,250";
    std::string k_list = "1,2,3,4,5,6,7,8,9,10";
    int trials = 20;
    std::uint64_t seed = 1;
    std::string model = "ar1";
    std::string beta_mode = "noiseless";
    double eta = 1e-4;
    int max_iters = 1000;
    std::string out = "phase_records.jsonl";
    std::string format = "jsonl";
    std::string grid_out = "phase_grid.csv";
    std::string timings;
};

int run_phase(const PhaseArgs& args) {
    bsbl::PhaseConfig config;
    config.n = args.n;
    config.g = args.g;
    config.r = args.r;
    config.m_values = parse_int_list(args.m_list, "M");
    config.k_values = parse_int_list(args.k_list, "k");
    config.trials = args.trials;
    config.base_seed = args.seed;
    config.model = parse_model(args.model);
    config.eta = args.eta;
    config.max_iters = args.max_iters;
    config.beta_mode = parse_beta_mode(args.beta_mode);

    bsbl::JsonObjectBuilder header;
    header.add("command", "phase")
        .add("n", args.n)
        .add("g", args.g)
        .add("r", args.r)
        .add_raw("m_values", render_int_list(config.m_values))
        .add_raw("k_values", render_int_list(config.k_values))
        .add("trials", args.trials)
        .add("base_seed", args.seed)
        .add("model", args.model)
        .add("beta_mode", args.beta_mode)
        .add("eta", args.eta)
        .add("max_iters", args.max_iters)
        .add("format", args.format);

    const bsbl::record_format format = bsbl::record_format_from_name(args.format);
    bsbl::RecordWriter writer(args.out, format, header.str());
    std::vector<bsbl::TrialRecord> records;
    config.sink = [&](const bsbl::TrialRecord& r) {
        writer.write(r);
        records.push_back(r);
    };

    const bsbl::PhaseGrid grid = bsbl::run_phase_transition(config);
    if (!args.grid_out.empty()) {
        bsbl::write_grid(args.grid_out, grid);
    }
    write_timings(args.timings, records);

    std::cout << records.size() << " records written to " << args.out;
    if (!args.grid_out.empty()) {
        std::cout << "; grid written to " << args.grid_out;
    }
    std::cout << '\n';
    print_runtime_summary(records);
    return kExitOk;
}

// --- sweep -------------------------------------------------------------------

struct SweepArgs {
    std::string n_list = "512,1024,2048";
    double ratio = 0.5;
    int g = 32;
    int k = 5;
    double r_lo = 0.8;
    double r_hi = 0.99;
    double snr = 15.0;
    int trials = 20;
    std::uint64_t seed = 1;
    double eta = 1e-4;
    int max_iters = 1000;
    std::string beta_mode = "auto";
    std::string algorithms = "bsbl-fm0,bsbl-fm1,bsbl-fm2,block-omp,oracle-ls";
    std::string out = "sweep_records.jsonl";
    std::string format = "jsonl";
    std::string timings;
};

int run_sweep(const SweepArgs& args) {
    bsbl::SweepConfig config;
    config.n_values = parse_int_list(args.n_list, "N");
    config.m_ratio = args.ratio;
    config.g = args.g;
    config.k_active = args.k;
    config.r_lo = args.r_lo;
    config.r_hi = args.r_hi;
    config.snr_db = args.snr;
    config.trials = args.trials;
    config.base_seed = args.seed;
    config.eta = args.eta;
    config.max_iters = args.max_iters;
    if (args.beta_mode != "auto") {
        config.beta_override = parse_beta_mode(args.beta_mode);
    }
    config.algorithms.clear();
    std::stringstream stream(args.algorithms);
    std::string item;
    while (std::getline(stream, item, ',')) {
        config.algorithms.push_back(item);
    }

    bsbl::JsonObjectBuilder header;
    header.add("command", "sweep")
        .add_raw("n_values", render_int_list(config.n_values))
        .add("m_ratio", args.ratio)
        .add("g", args.g)
        .add("k_active", args.k)
        .add("r_lo", args.r_lo)
        .add("r_hi", args.r_hi)
        .add("snr_db", args.snr)
        .add("trials", args.trials)
        .add("base_seed", args.seed)
        .add("eta", args.eta)
        .add("max_iters", args.max_iters)
        .add("beta_mode", args.beta_mode)
        .add_raw("algorithms", render_string_list(config.algorithms))
        .add("format", args.format);

    const bsbl::record_format format = bsbl::record_format_from_name(args.format);
    bsbl::RecordWriter writer(args.out, format, header.str());
    config.sink = [&](const bsbl::TrialRecord& r) { writer.write(r); };

    const std::vector<bsbl::TrialRecord> records = bsbl::run_noisy_sweep(config);
    write_timings(args.timings, records);

    std::cout << records.size() << " records written to " << args.out << '\n';
    print_runtime_summary(records);
    return kExitOk;
}

// --- dct-demo ----------------------------------------------------------------

struct DctArgs {
    int m = 256;
    int n = 512;
    int ones = 12;
    int g = 16;
    int trials = 20;
    std::uint64_t seed = 1;
    std::string model = "sim";
    std::string beta_mode = "noiseless";
    double eta = 1e-4;
    int max_iters = 1000;
    std::string out = "dct_records.jsonl";
    std::string format = "jsonl";
    std::string timings;
};

int run_dct(const DctArgs& args) {
    bsbl::DctDemoConfig config;
    config.m = args.m;
    config.n = args.n;
    config.ones_per_column = args.ones;
    config.g = args.g;
    config.trials = args.trials;
    config.base_seed = args.seed;
    config.model = parse_model(args.model);
    config.eta = args.eta;
    config.max_iters = args.max_iters;
    config.beta_mode = parse_beta_mode(args.beta_mode);

    bsbl::JsonObjectBuilder header;
    header.add("command", "dct-demo")
        .add("m", args.m)
        .add("n", args.n)
        .add("ones_per_column", args.ones)
        .add("g", args.g)
        .add("trials", args.trials)
        .add("base_seed", args.seed)
        .add("model", args.model)
        .add("beta_mode", args.beta_mode)
        .add("eta", args.eta)
        .add("max_iters", args.max_iters)
        .add("format", args.format);

    const bsbl::record_format format = bsbl::record_format_from_name(args.format);
    bsbl::RecordWriter writer(args.out, format, header.str());
    config.sink = [&](const bsbl::TrialRecord& r) { writer.write(r); };

    const std::vector<bsbl::TrialRecord> records = bsbl::run_dct_demo(config);
    write_timings(args.timings, records);

    std::cout << records.size() << " records written to " << args.out << '\n';
    print_runtime_summary(records);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"block-sparse signal recovery: fast marginalized block-SBL and baselines"};
    app.require_subcommand(1);

    SolveArgs solve_args;
    auto* solve = app.add_subcommand("solve", "recover one signal from files");
    solve->add_option("matrix", solve_args.matrix_file,
                      "sensing matrix file ('rows cols' header, row-major values)");
    solve->add_option("observation", solve_args.observation_file,
                      "observation vector file (the only positional with --binary-sensing)");
    solve->add_option("--binary-sensing", solve_args.binary_sensing,
                      "generate a sparse binary sensing matrix MxNxK instead of reading one");
    solve->add_option("--blocks", solve_args.blocks, "number of equal blocks");
    solve->add_option("--partition", solve_args.partition_list, "comma-separated block sizes");
    solve->add_option("--model", solve_args.model, "correlation model: sim, ar1, ar1-avg");
    solve->add_option("--beta-mode", solve_args.beta_mode,
                      "noiseless, low-snr, high-snr, or fixed:<float>");
    solve->add_option("--eta", solve_args.eta, "stopping threshold on |delta cost|");
    solve->add_option("--max-iters", solve_args.max_iters, "iteration cap");
    solve->add_option("--seed", solve_args.seed, "seed for --binary-sensing");
    solve->add_option("--out", solve_args.out, "result file (JSON)");
    solve->add_flag("--strict", solve_args.strict, "exit 4 if the solver does not converge");

    PhaseArgs phase_args;
    auto* phase = app.add_subcommand("phase", "noiseless phase-transition sweep over (M, k)");
    phase->add_option("--n", phase_args.n, "signal length");
    phase->add_option("--g", phase_args.g, "block count (d = n/g)");
    phase->add_option("--r", phase_args.r, "intra-block AR coefficient of generated signals");
    phase->add_option("--m-list", phase_args.m_list, "comma-separated measurement counts");
    phase->add_option("--k-list", phase_args.k_list, "comma-separated active block counts");
    phase->add_option("--trials", phase_args.trials, "trials per cell");
    phase->add_option("--seed", phase_args.seed, "base seed");
    phase->add_option("--model", phase_args.model, "correlation model: sim, ar1, ar1-avg");
    phase->add_option("--beta-mode", phase_args.beta_mode,
                      "noiseless, low-snr, high-snr, or fixed:<float>");
    phase->add_option("--eta", phase_args.eta, "stopping threshold");
    phase->add_option("--max-iters", phase_args.max_iters, "iteration cap");
    phase->add_option("--out", phase_args.out, "records file");
    phase->add_option("--format", phase_args.format, "jsonl or csv");
    phase->add_option("--grid-out", phase_args.grid_out,
                      "success-rate grid file (empty to skip)");
    phase->add_option("--timings", phase_args.timings, "runtime sidecar file (non-deterministic)");

    SweepArgs sweep_args;
    auto* sweep = app.add_subcommand("sweep", "noisy N-sweep comparing all algorithms");
    sweep->add_option("--n-list", sweep_args.n_list, "comma-separated signal lengths");
    sweep->add_option("--ratio", sweep_args.ratio, "M/N measurement ratio");
    sweep->add_option("--g", sweep_args.g, "block count (d = n/g)");
    sweep->add_option("--k", sweep_args.k, "active block count");
    sweep->add_option("--r-lo", sweep_args.r_lo, "AR coefficient range low end");
    sweep->add_option("--r-hi", sweep_args.r_hi, "AR coefficient range high end");
    sweep->add_option("--snr", sweep_args.snr, "target SNR in dB (realized exactly)");
    sweep->add_option("--trials", sweep_args.trials, "trials per N");
    sweep->add_option("--seed", sweep_args.seed, "base seed");
    sweep->add_option("--eta", sweep_args.eta, "stopping threshold");
    sweep->add_option("--max-iters", sweep_args.max_iters, "iteration cap");
    sweep->add_option("--beta-mode", sweep_args.beta_mode,
                      "auto (exact realized noise precision), noiseless, low-snr, high-snr, "
                      "or fixed:<float>");
    sweep->add_option("--algorithms", sweep_args.algorithms, "comma-separated algorithm labels");
    sweep->add_option("--out", sweep_args.out, "records file");
    sweep->add_option("--format", sweep_args.format, "jsonl or csv");
    sweep->add_option("--timings", sweep_args.timings, "runtime sidecar file (non-deterministic)");

    DctArgs dct_args;
    auto* dct = app.add_subcommand("dct-demo",
                                   "compressed-sensing pipeline demo in a DCT basis");
    dct->add_option("--m", dct_args.m, "measurement count");
    dct->add_option("--n", dct_args.n, "signal length");
    dct->add_option("--ones", dct_args.ones, "ones per sensing column");
    dct->add_option("--g", dct_args.g, "transform-domain block count (d = n/g)");
    dct->add_option("--trials", dct_args.trials, "number of trials");
    dct->add_option("--seed", dct_args.seed, "base seed");
    dct->add_option("--model", dct_args.model, "correlation model: sim, ar1, ar1-avg");
    dct->add_option("--beta-mode", dct_args.beta_mode,
                    "noiseless, low-snr, high-snr, or fixed:<float>");
    dct->add_option("--eta", dct_args.eta, "stopping threshold");
    dct->add_option("--max-iters", dct_args.max_iters, "iteration cap");
    dct->add_option("--out", dct_args.out, "records file");
    dct->add_option("--format", dct_args.format, "jsonl or csv");
    dct->add_option("--timings", dct_args.timings, "runtime sidecar file (non-deterministic)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitInvalid;
    }

    try {
        if (*solve) {
            return run_solve(solve_args);
        }
        if (*phase) {
            return run_phase(phase_args);
        }
        if (*sweep) {
            return run_sweep(sweep_args);
        }
        return run_dct(dct_args);
    } catch (const bsbl::invalid_input& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInvalid;
    } catch (const bsbl::error& e) {
        // numerical_error and internal_error both indicate degeneracy at the
        // numerical layer rather than bad user input
        std::cerr << "error: " << e.what() << '\n';
        return kExitNumerical;
    }
}
