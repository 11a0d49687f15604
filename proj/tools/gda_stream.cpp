// gda-stream: run the adaptation pipeline on a stream directory, generate
// synthetic drifting streams, and re-verify their drift budget.

#include "gdastream/drift_sim.hpp"
#include "gdastream/embedding_io.hpp"
#include "gdastream/pipeline.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace gdastream;

namespace {

constexpr int kConfigExit = 2;
constexpr int kDataExit = 3;
constexpr const char* kSpecFile = "drift_spec.txt";

std::string slurp(const fs::path& file)
{
    std::ifstream in(file);
    if (!in)
        throw ConfigError("cannot read " + file.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_text(const fs::path& file, const std::string& text)
{
    std::ofstream out(file);
    out << text;
    if (!out)
        throw DataError("cannot write " + file.string());
}

struct RunArgs {
    fs::path stream;
    fs::path out;
    fs::path resume;
    std::string force_mode = "auto";
    std::vector<std::string> disable;
    bool plot = false;
    pipeline::PipelineConfig config;
};

int do_run(RunArgs& args)
{
    auto& config = args.config;
    if (args.force_mode == "lda")
        config.mode = pipeline::ModeOverride::ForceLda;
    else if (args.force_mode == "qda")
        config.mode = pipeline::ModeOverride::ForceQda;
    else if (args.force_mode != "auto")
        throw ConfigError("--force-mode must be lda, qda or auto");
    for (const auto& name : args.disable)
        pipeline::disable_component(config, name);
    config.validate();

    StreamReader reader(args.stream);
    pipeline::Pipeline engine(reader.prototypes(), config);
    if (!args.resume.empty())
        engine.load_checkpoint(args.resume);
    const auto result = pipeline::run_with(engine, reader, config.rounds);

    if (const auto& report = result.summary.report; report && !report->feasible)
        std::cerr << "warning: homogeneity test infeasible on the first batch ("
                  << report->classes_tested << " classes with enough mass); using homogeneous covariance\n";

    const std::string log = pipeline::run_log_text(config, result);
    std::cout << log;
    if (!args.out.empty()) {
        fs::create_directories(args.out);
        write_text(args.out / "run.log", log);
        if (result.rounds.size() == 1) {
            pipeline::write_prediction_csv(result.rounds.front().log, args.out / "predictions.csv");
        } else {
            for (std::size_t r = 0; r < result.rounds.size(); ++r)
                pipeline::write_prediction_csv(result.rounds[r].log,
                                               args.out / ("predictions_round" + std::to_string(r + 1) + ".csv"));
        }
        engine.save_checkpoint(args.out / "checkpoint.bin");
        if (args.plot && !result.summary.domains.empty())
            pipeline::write_accuracy_table(result, args.out / "accuracy.dat");
    }
    return 0;
}

int do_simulate(const fs::path& spec_file, const fs::path& out)
{
    const auto spec = drift::parse_spec(slurp(spec_file));
    const auto generated = drift::generate(spec);
    const auto manifest = write_stream(generated.batches, generated.prototypes, out);
    write_text(out / kSpecFile, drift::to_key_value(spec));
    const auto report = drift::verify_drift_bound(generated.truth, spec.delta);
    std::cout << "batches=" << manifest.total_batches() << '\n'
              << "samples=" << manifest.total_samples() << '\n'
              << "max_step_kl=" << report.max_kl << '\n';
    return 0;
}

int do_verify(const fs::path& stream, double delta)
{
    if (!(delta > 0.0))
        throw ConfigError("--delta must be positive");
    const fs::path spec_file = stream / kSpecFile;
    if (!fs::exists(spec_file))
        throw DataError("no " + std::string(kSpecFile) + " in " + stream.string() +
                        "; only simulated streams carry ground truth");
    const auto spec = drift::parse_spec(slurp(spec_file));
    const auto truth = drift::ground_truth(spec);

    // The stream on disk must be the one the spec describes.
    const auto manifest = read_manifest(stream / "manifest.txt");
    if (manifest.total_batches() != truth.step_index.size())
        throw DataError("stream does not match its drift spec");

    const auto report = drift::verify_drift_bound(truth, delta);
    std::cout.precision(17);
    for (const auto& s : report.steps)
        std::cout << "step " << s.from_step << "->" << s.to_step << " max_kl=" << s.max_class_kl << '\n';
    std::cout << "max_kl=" << report.max_kl << '\n' << "delta=" << delta << '\n';
    if (report.first_violation)
        std::cout << "violation_step=" << *report.first_violation << '\n';
    std::cout << "result=" << (report.pass ? "pass" : "fail") << '\n';
    return report.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Streaming Bayesian test-time adaptation on embedding streams"};
    app.require_subcommand(1);

    RunArgs run;
    auto* run_cmd = app.add_subcommand("run", "Adapt over a stream and report per-domain accuracy");
    run_cmd->add_option("--stream", run.stream, "Stream directory")->required();
    run_cmd->add_option("--alpha", run.config.alpha, "Fusion weight");
    run_cmd->add_option("--lr", run.config.lr, "Adapter learning rate");
    run_cmd->add_option("--ema", run.config.ema, "EMA decay");
    run_cmd->add_option("--eps", run.config.eps, "Covariance shrinkage strength");
    run_cmd->add_option("--prior-var", run.config.prior_variance, "Shrinkage target variance");
    run_cmd->add_option("--tau", run.config.tau, "Sketch temperature");
    run_cmd->add_option("--kappa", run.config.kappa, "Homogeneity test level");
    run_cmd->add_option("--pca-dim", run.config.pca_dim, "PCA dimension for the homogeneity test");
    run_cmd->add_option("--batch-size", run.config.batch_size, "Expected batch size (0: any)");
    run_cmd->add_option("--rounds", run.config.rounds, "Replay rounds");
    run_cmd->add_option("--force-mode", run.force_mode, "lda, qda or auto");
    run_cmd->add_option("--disable", run.disable, "hypothesis-test, em, fusion, self-paced, continual");
    run_cmd->add_option("--seed", run.config.seed, "Recorded in the run log");
    run_cmd->add_option("--out", run.out, "Output directory");
    run_cmd->add_option("--resume", run.resume, "Checkpoint to resume from");
    run_cmd->add_flag("--plot", run.plot, "Also write a gnuplot per-domain accuracy table");

    fs::path spec_file;
    fs::path sim_out;
    auto* sim_cmd = app.add_subcommand("simulate", "Generate a synthetic drifting stream");
    sim_cmd->add_option("--spec", spec_file, "key=value drift spec")->required();
    sim_cmd->add_option("--out", sim_out, "Output stream directory")->required();

    fs::path verify_stream;
    double delta = 0.0;
    auto* verify_cmd = app.add_subcommand("verify-drift", "Check a simulated stream against a KL budget");
    verify_cmd->add_option("--stream", verify_stream, "Stream directory")->required();
    verify_cmd->add_option("--delta", delta, "Per-step KL budget")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kConfigExit;
    }

    try {
        if (*run_cmd)
            return do_run(run);
        if (*sim_cmd)
            return do_simulate(spec_file, sim_out);
        return do_verify(verify_stream, delta);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigExit;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kDataExit;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kDataExit;
    }
}
