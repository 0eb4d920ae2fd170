#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "narrclf/experiment.hpp"
#include "narrclf/testing/mock_servers.hpp"

using namespace narrclf;
namespace fs = std::filesystem;

namespace {

class Workspace : public ::testing::Test {
protected:
    fs::path dir;

    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir = fs::temp_directory_path() / (std::string("narrclf_") + info->test_suite_name() + "_" + info->name());
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }

    fs::path write(const std::string& name, const std::string& content) {
        std::ofstream(dir / name, std::ios::binary) << content;
        return dir / name;
    }

    std::string config_text(const std::string& llm_url, const std::string& tr_url, const std::string& extra = {}) {
        return "[paths]\ncorpus = \"corpus.jsonl\"\noutput_dir = \"out\"\n"
               "[split]\nseed = 7\n"
               "[features]\nmax_features = 500\n"
               "[svm]\nmode = \"grid\"\nseed = 1\n"
               "[grid]\nC_values = [2, 1024]\nfolds = 3\nseed = 2\n"
               "[llm]\nbase_url = \"" + llm_url + "\"\ntimeout_ms = 2000\nretries = 0\nbackoff_ms = 1\n"
               "[transformer]\nbase_url = \"" + tr_url + "\"\ntimeout_ms = 2000\nretries = 0\nbackoff_ms = 1\n"
               "[eval]\nn_boot = 200\nseed = 3\n"
               "[synth]\nn = 441\nseed = 11\nsignal = 1.0\n" + extra;
    }

    int run_cli(const std::string& args) {
        const std::string cmd = std::string(NARRCLF_CLI) + " " + args + " > " + (dir / "cli.log").string() + " 2>&1";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    std::string cli_log() {
        std::ifstream in(dir / "cli.log");
        return {std::istreambuf_iterator<char>(in), {}};
    }
};

}  // namespace

TEST(ConfigParsing, OverridesAndTypes) {
    nlohmann::json cfg = nlohmann::json::object();
    apply_override(cfg, "svm.C=64");
    apply_override(cfg, "llm.base_url=http://x:1");
    apply_override(cfg, "models.enabled=[\"svm\"]");
    apply_override(cfg, "features.lowercase=true");
    EXPECT_EQ(cfg["svm"]["C"], 64);
    EXPECT_EQ(cfg["llm"]["base_url"], "http://x:1");
    EXPECT_EQ(cfg["models"]["enabled"], nlohmann::json::array({"svm"}));
    EXPECT_EQ(cfg["features"]["lowercase"], true);
    EXPECT_THROW(apply_override(cfg, "novalue"), ConfigError);
    EXPECT_THROW(apply_override(cfg, "svm..C=1"), ConfigError);
    EXPECT_THROW(apply_override(cfg, "svm.C.x=1"), ConfigError);
}

TEST(ConfigParsing, HashIsStableAndSensitive) {
    EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
    EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
    EXPECT_NE(fnv1a_hex("ab"), fnv1a_hex("ba"));
}

TEST_F(Workspace, LoadsTomlAndAppliesOverrides) {
    write("corpus.jsonl", "");
    const auto path = write("exp.toml", config_text("http://127.0.0.1:9", "http://127.0.0.1:9"));
    const auto c = load_config(path);
    EXPECT_EQ(c.corpus, dir / "corpus.jsonl");
    EXPECT_EQ(c.output_dir, dir / "out");
    EXPECT_EQ(c.split_seed, 7u);
    EXPECT_EQ(c.grid.C_values, (std::vector<double>{2, 1024}));
    EXPECT_EQ(c.grid.folds, 3u);
    EXPECT_EQ(c.n_boot, 200u);
    EXPECT_EQ(c.llm.timeout, std::chrono::milliseconds(2000));
    EXPECT_EQ(c.prompt_template().name(), "default-v1");

    const auto again = load_config(path);
    EXPECT_EQ(again.hash, c.hash);
    const auto changed = load_config(path, {"eval.n_boot=300"});
    EXPECT_EQ(changed.n_boot, 300u);
    EXPECT_NE(changed.hash, c.hash);

    const auto svm_only = load_config(path, {"models.enabled=[\"svm\"]"});
    EXPECT_EQ(svm_only.models, (std::vector<ModelKind>{ModelKind::Svm}));
    EXPECT_FALSE(svm_only.ensemble_enabled());
}

TEST_F(Workspace, ConfigErrors) {
    write("corpus.jsonl", "");
    const auto path = write("exp.toml", config_text("http://127.0.0.1:9", "http://127.0.0.1:9"));
    EXPECT_THROW(load_config(path, {"split.seed=\"x\""}), ConfigError);
    EXPECT_THROW(load_config(path, {"svm.bogus=1"}), ConfigError);
    EXPECT_THROW(load_config(path, {"grid.mode=\"loo\""}), ConfigError);
    EXPECT_THROW(load_config(path, {"paths.corpus=\"missing.jsonl\""}), ConfigError);
    EXPECT_THROW(load_config(path, {"models.enabled=[\"svm\",\"svm\"]"}), ConfigError);
    EXPECT_THROW(load_config(path, {"llm.template=\"nope.txt\""}), ConfigError);

    const auto noseed = write("noseed.toml", "[paths]\ncorpus = \"corpus.jsonl\"\n[eval]\nseed = 1\n"
                                             "[models]\nenabled = [\"svm\"]\n[svm]\nmode = \"fixed\"\nseed = 1\n");
    try {
        load_config(noseed);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("split"), std::string::npos);
    }
    const auto bad = write("bad.toml", "[paths\ncorpus = 1\n");
    EXPECT_THROW(load_config(bad), ConfigError);
}

TEST_F(Workspace, ArtifactsFromAnotherConfigAreRefused) {
    const auto path = write("exp.toml", config_text("http://127.0.0.1:9", "http://127.0.0.1:9"));
    cmd_synth(load_config(path, {}, ConfigUse::Synth));
    const auto c = load_config(path);
    cmd_split(c);
    EXPECT_NO_THROW(load_split(c));
    const auto other = load_config(path, {"split.seed=8"});
    EXPECT_THROW(load_split(other), ArtifactError);
    EXPECT_THROW(cmd_featurize(other), ArtifactError);
}

TEST_F(Workspace, CliSplitReproducesPartitionSizes) {
    const auto path = write("exp.toml", config_text("http://127.0.0.1:9", "http://127.0.0.1:9"));
    ASSERT_EQ(run_cli("synth --config " + path.string()), 0) << cli_log();
    ASSERT_EQ(run_cli("split --config " + path.string()), 0) << cli_log();
    EXPECT_NE(cli_log().find("train 264, dev 88, test 89"), std::string::npos) << cli_log();
    const auto split = load_split(load_config(path));
    auto positives = [](const std::vector<Transcript>& v) {
        return std::count_if(v.begin(), v.end(), [](const auto& t) { return *t.label == 1; });
    };
    EXPECT_EQ(positives(split.train), 134);
    EXPECT_EQ(positives(split.dev), 45);
    EXPECT_EQ(positives(split.test), 45);
}

TEST_F(Workspace, CliSynthIsDeterministic) {
    const auto path = write("exp.toml", config_text("http://127.0.0.1:9", "http://127.0.0.1:9"));
    ASSERT_EQ(run_cli("synth --config " + path.string()), 0) << cli_log();
    const auto first = read_file(dir / "corpus.jsonl");
    ASSERT_EQ(run_cli("synth --config " + path.string()), 0) << cli_log();
    EXPECT_EQ(read_file(dir / "corpus.jsonl"), first);
    ASSERT_EQ(run_cli("synth --config " + path.string() + " --override synth.seed=12"), 0) << cli_log();
    EXPECT_NE(read_file(dir / "corpus.jsonl"), first);
}

TEST_F(Workspace, CliUnreachableLlmLeavesNoVotes) {
    const auto path = write("exp.toml", config_text("http://127.0.0.1:1", "http://127.0.0.1:1"));
    ASSERT_EQ(run_cli("synth --config " + path.string()), 0) << cli_log();
    ASSERT_EQ(run_cli("split --config " + path.string()), 0) << cli_log();
    EXPECT_EQ(run_cli("predict --model llm --config " + path.string()), 3) << cli_log();
    EXPECT_FALSE(fs::exists(dir / "out" / "votes_llm.jsonl"));
}

TEST_F(Workspace, CliUsageAndConfigErrors) {
    const auto path = write("exp.toml", config_text("http://127.0.0.1:1", "http://127.0.0.1:1"));
    EXPECT_EQ(run_cli("frobnicate"), 1);
    EXPECT_EQ(run_cli("predict --config " + path.string()), 1);
    EXPECT_EQ(run_cli("split --config " + path.string()), 1) << cli_log();  // corpus missing
    ASSERT_EQ(run_cli("synth --config " + path.string()), 0) << cli_log();
    EXPECT_EQ(run_cli("featurize --config " + path.string()), 2) << cli_log();  // no split yet
}

TEST_F(Workspace, StageByStagePipelineWithMocks) {
    narrclf::testing::MockLlmServer llm;
    narrclf::testing::MockTransformerServer tr;
    llm.start();
    tr.start();
    const auto path = write("exp.toml", config_text(llm.base_url(), tr.base_url()));
    const auto p = " --config " + path.string();
    ASSERT_EQ(run_cli("synth" + p), 0) << cli_log();
    for (const char* cmd : {"split", "featurize", "grid-search", "train-svm", "predict --model llm",
                            "predict --model transformer", "predict --model svm", "ensemble"})
        ASSERT_EQ(run_cli(std::string(cmd) + p), 0) << cmd << "\n" << cli_log();
    ASSERT_EQ(run_cli("evaluate" + p), 0) << cli_log();
    EXPECT_EQ(llm.count("/generate"), 89u);
    EXPECT_EQ(tr.count("/tokenize"), 89u);

    const auto report = eval_report_from_json(nlohmann::json::parse(read_file(dir / "out" / "report.json")));
    ASSERT_EQ(report.rows.size(), 4u);
    EXPECT_EQ(report.rows[0].model, "llm");
    EXPECT_EQ(report.rows[1].model, "transformer");
    EXPECT_EQ(report.rows[2].model, "svm");
    EXPECT_EQ(report.rows[3].model, "ensemble");
    for (const auto& row : report.rows) EXPECT_EQ(row.confusion.total(), 89u);
    EXPECT_EQ(cli_log(), read_file(dir / "out" / "report.txt"));

    // ensemble decisions agree with the majority of the stored votes
    const auto c = load_config(path);
    const auto decisions = read_file(dir / "out" / "decisions.jsonl");
    std::istringstream lines(decisions);
    std::string line;
    std::size_t n = 0;
    while (std::getline(lines, line)) {
        const auto j = nlohmann::json::parse(line);
        const auto& v = j["votes"];
        EXPECT_EQ(j["label"].get<int>(), majority_vote({v["llm"].get<int>(), v["transformer"].get<int>(), v["svm"].get<int>()}));
        EXPECT_EQ(j["config_hash"], c.hash);
        ++n;
    }
    EXPECT_EQ(n, 89u);
    EXPECT_TRUE(fs::exists(dir / "out" / "manifest_evaluate.json"));
}

TEST_F(Workspace, SvmOnlySubsetReportsOneRow) {
    const auto path = write("exp.toml", config_text("http://127.0.0.1:1", "http://127.0.0.1:1",
                                                    "[models]\nenabled = [\"svm\"]\n"));
    ASSERT_EQ(run_cli("synth --config " + path.string()), 0) << cli_log();
    ASSERT_EQ(run_cli("experiment --config " + path.string()), 0) << cli_log();
    const auto report = eval_report_from_json(nlohmann::json::parse(read_file(dir / "out" / "report.json")));
    ASSERT_EQ(report.rows.size(), 1u);
    EXPECT_EQ(report.rows[0].model, "svm");
    EXPECT_FALSE(fs::exists(dir / "out" / "decisions.jsonl"));
    EXPECT_EQ(run_cli("ensemble --config " + path.string()), 1);
}

TEST_F(Workspace, ExperimentIsReproducible) {
    narrclf::testing::MockLlmServer llm;
    narrclf::testing::MockTransformerServer tr;
    llm.start();
    tr.start();
    const auto path = write("exp.toml", config_text(llm.base_url(), tr.base_url(), "") );
    const auto c = load_config(path, {}, ConfigUse::Synth);
    cmd_synth(c);
    const auto cfg = load_config(path, {"grid.C_values=[1024]", "grid.kernels=[\"linear\"]"});
    cmd_experiment(cfg);
    const auto first = read_file(dir / "out" / "report.json");
    const auto model = read_file(dir / "out" / "model.json");
    cmd_experiment(cfg);
    EXPECT_EQ(read_file(dir / "out" / "report.json"), first);
    EXPECT_EQ(read_file(dir / "out" / "model.json"), model);
}

TEST(Samples, ConfigsAndTranscriptsLoad) {
    const fs::path samples = NARRCLF_SAMPLES;
    std::ifstream in(samples / "transcripts.jsonl");
    const auto data = parse_transcripts(in);
    ASSERT_EQ(data.size(), 2u);
    EXPECT_EQ(*data[0].label, 1);
    const auto synth = load_config(samples / "experiment.toml", {}, ConfigUse::Synth);
    EXPECT_EQ(synth.synth->n, 441u);
    // the pipeline view needs the corpus to exist; point it at the bundled transcripts
    const auto c = load_config(samples / "experiment.toml", {"paths.corpus=\"transcripts.jsonl\""});
    EXPECT_EQ(c.prompt_template().name(), "default_prompt.txt");
    EXPECT_EQ(c.prompt_template().text(), PromptTemplate::default_template().text());
    EXPECT_EQ(c.models.size(), 3u);
    const auto svm = load_config(samples / "svm_only.toml", {"paths.corpus=\"transcripts.jsonl\""});
    EXPECT_EQ(svm.svm_mode, SvmMode::Fixed);
    EXPECT_EQ(svm.models, (std::vector<ModelKind>{ModelKind::Svm}));
}
