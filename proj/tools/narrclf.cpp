#include <csignal>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "narrclf/experiment.hpp"
#include "narrclf/testing/mock_servers.hpp"

namespace {

int exit_code(narrclf::ErrorKind kind) {
    switch (kind) {
        case narrclf::ErrorKind::Usage:
        case narrclf::ErrorKind::Config: return 1;
        case narrclf::ErrorKind::Data: return 2;
        case narrclf::ErrorKind::Remote: return 3;
    }
    return 2;
}

volatile std::sig_atomic_t g_stop = 0;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Narrative transcript classification: SVM, remote LLM and transformer, majority-vote ensemble"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(narrclf::kVersion));

    std::string config_path;
    std::vector<std::string> overrides;
    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "Experiment config (TOML)")->required()->check(CLI::ExistingFile);
        cmd->add_option("--override", overrides, "Override a config value, key.path=value (repeatable)");
    };

    auto* synth = app.add_subcommand("synth", "Generate a synthetic labeled corpus at paths.corpus");
    auto* split = app.add_subcommand("split", "Stratified train/dev/test split");
    auto* featurize = app.add_subcommand("featurize", "Fit the TF-IDF vocabulary and scaler; write feature vectors");
    auto* grid = app.add_subcommand("grid-search", "Cross-validated (C, kernel) grid search");
    auto* train = app.add_subcommand("train-svm", "Train the SVM on the training split");
    auto* predict = app.add_subcommand("predict", "Write one model's votes on the test split");
    auto* ensemble = app.add_subcommand("ensemble", "Majority vote over the three models' votes");
    auto* evaluate = app.add_subcommand("evaluate", "Metrics, confusion matrices and bootstrap CIs");
    auto* experiment = app.add_subcommand("experiment", "Run every stage end to end");
    for (auto* cmd : {synth, split, featurize, grid, train, predict, ensemble, evaluate, experiment}) add_common(cmd);

    std::string model_name;
    predict->add_option("--model", model_name, "llm | transformer | svm")->required()->check(
        CLI::IsMember({"llm", "transformer", "svm"}));

    auto* mock = app.add_subcommand("mock-serve", "Serve the deterministic mock LLM and transformer endpoints");
    int llm_port = 8081, transformer_port = 8082;
    mock->add_option("--llm-port", llm_port, "Port for the mock LLM");
    mock->add_option("--transformer-port", transformer_port, "Port for the mock transformer");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (mock->parsed()) {
            narrclf::testing::MockLlmServer llm;
            narrclf::testing::MockTransformerServer tr;
            llm.start(llm_port);
            tr.start(transformer_port);
            std::cout << "mock llm at " << llm.base_url() << ", mock transformer at " << tr.base_url() << std::endl;
            std::signal(SIGINT, [](int) { g_stop = 1; });
            std::signal(SIGTERM, [](int) { g_stop = 1; });
            while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
            return 0;
        }

        if (synth->parsed()) {
            const auto cfg = narrclf::load_config(config_path, overrides, narrclf::ConfigUse::Synth);
            narrclf::cmd_synth(cfg);
            std::cout << "wrote " << cfg.synth->n << " transcripts to " << cfg.corpus.string() << "\n";
            return 0;
        }

        const auto cfg = narrclf::load_config(config_path, overrides);
        if (split->parsed()) {
            const auto s = narrclf::cmd_split(cfg);
            std::cout << "train " << s.train.size() << ", dev " << s.dev.size() << ", test " << s.test.size() << "\n";
        } else if (featurize->parsed()) {
            narrclf::cmd_featurize(cfg);
        } else if (grid->parsed()) {
            const auto r = narrclf::cmd_grid_search(cfg);
            const auto& best = r.cells[r.best];
            std::cout << "selected C=" << best.config.C << " kernel=" << narrclf::to_string(best.config.kernel)
                      << " mean F1=" << best.mean_f1 << " mean accuracy=" << best.mean_accuracy << "\n";
        } else if (train->parsed()) {
            const auto m = narrclf::cmd_train_svm(cfg);
            std::cout << m.support_vectors.size() << " support vectors"
                      << (m.converged ? "" : " (iteration cap reached before convergence)") << "\n";
        } else if (predict->parsed()) {
            const auto votes = narrclf::cmd_predict(cfg, narrclf::model_kind_from_string(model_name));
            std::cout << votes.size() << " votes\n";
        } else if (ensemble->parsed()) {
            narrclf::cmd_ensemble(cfg);
        } else if (evaluate->parsed()) {
            std::cout << narrclf::render_report(narrclf::cmd_evaluate(cfg), narrclf::ReportFormat::Text);
        } else if (experiment->parsed()) {
            std::cout << narrclf::render_report(narrclf::cmd_experiment(cfg), narrclf::ReportFormat::Text);
        }
        return 0;
    } catch (const narrclf::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
