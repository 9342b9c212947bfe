// mtrx: command-line front end for labeling, experience-base management, episodes, toy
// training and evaluation.

#include <CLI11.hpp>

#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "mtrx/commands.hpp"

namespace {

using Override = std::function<void(mtrx::RunConfig&)>;

// Exit codes: 0 ok, 1 unexpected failure, 2 usage error, 10 + ErrorCode for library errors.
constexpr int kExitUnexpected = 1;
constexpr int kExitUsage = 2;
constexpr int kExitBase = 10;

class Cli {
 public:
  Cli() : app_("Experience-retrieval driving agent pipeline") {
    app_.require_subcommand(1);
    app_.fallthrough();
    app_.add_option("-c,--config", config_path_, "TOML config file (default: $MTRX_CONFIG)");

    label();
    build_base();
    retrieve();
    run();
    train_toy();
    eval();
  }

  int main(int argc, char** argv) {
    try {
      app_.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      const int code = app_.exit(e);
      return code == 0 ? 0 : kExitUsage;
    }
    try {
      mtrx::RunConfig cfg;
      if (config_path_.empty())
        if (auto env = mtrx::default_config_path()) config_path_ = env->string();
      if (!config_path_.empty()) cfg = mtrx::load_run_config(config_path_);
      for (const auto& o : overrides_) o(cfg);
      cfg.validate();
      action_(cfg);
      return 0;
    } catch (const mtrx::Error& e) {
      std::cerr << "mtrx " << command_ << ": " << mtrx::owning_module(e.code()) << ": " << e.what() << "\n";
      return kExitBase + static_cast<int>(e.code());
    } catch (const std::exception& e) {
      std::cerr << "mtrx " << command_ << ": " << e.what() << "\n";
      return kExitUnexpected;
    }
  }

 private:
  static std::string help(const std::string& text, const std::string& key) {
    return text + " (overrides " + key + ")";
  }

  template <class T>
  void flag(CLI::App* sub, const std::string& name, const std::string& key, const std::string& text,
            std::function<void(mtrx::RunConfig&, const T&)> set) {
    sub->add_option_function<T>(
        name, [this, set](const T& v) { overrides_.push_back([set, v](mtrx::RunConfig& c) { set(c, v); }); },
        help(text, key));
  }

  void encoder_flags(CLI::App* sub) {
    flag<std::size_t>(sub, "--dims", "encoder.dims", "Embedding dimension",
                      [](auto& c, auto v) { c.encoder.dims = v; });
    flag<std::uint64_t>(sub, "--encoder-seed", "encoder.seed", "Reference encoder hash seed",
                        [](auto& c, auto v) { c.encoder.seed = v; });
    flag<std::string>(sub, "--encoder-url", "encoder.url", "Encoder service URL (selects the http backend)",
                      [](auto& c, const auto& v) {
                        c.encoder.url = v;
                        c.encoder.backend = "http";
                      });
  }

  CLI::App* command(const std::string& name, const std::string& description, std::function<void(const mtrx::RunConfig&)> act) {
    CLI::App* sub = app_.add_subcommand(name, description);
    sub->callback([this, name, act] {
      command_ = name;
      action_ = act;
    });
    return sub;
  }

  void label() {
    auto* sub = command("label", "Derive meta-action labels from ego trajectories", [](const mtrx::RunConfig& c) {
      mtrx::detail::require_path(c.paths.trajectories, "paths.trajectories");
      mtrx::detail::require_path(c.paths.labels, "paths.labels");
      const auto n = mtrx::cmd_label(c, c.paths.trajectories, c.paths.labels);
      std::cerr << "labeled " << n << " trajectories -> " << c.paths.labels << "\n";
    });
    flag<std::string>(sub, "--trajectories", "paths.trajectories", "Trajectory file (.csv or JSON Lines)",
                      [](auto& c, const auto& v) { c.paths.trajectories = v; });
    flag<std::string>(sub, "-o,--out", "paths.labels", "Output labels (JSON Lines)",
                      [](auto& c, const auto& v) { c.paths.labels = v; });
    flag<double>(sub, "--stop-speed", "labeling.stop_speed", "Terminal mean speed below which the plan is stop, m/s",
                 [](auto& c, auto v) { c.labeling.stop_speed = v; });
    flag<double>(sub, "--accel", "labeling.accel", "Mean acceleration magnitude for accelerate/decelerate, m/s^2",
                 [](auto& c, auto v) { c.labeling.accel = v; });
    flag<double>(sub, "--turn-deg", "labeling.turn_deg", "Net heading change that counts as a turn, degrees",
                 [](auto& c, auto v) { c.labeling.turn = v * std::numbers::pi / 180.0; });
    flag<double>(sub, "--lane", "labeling.lane", "Net lateral offset that counts as a lane change, m",
                 [](auto& c, auto v) { c.labeling.lane = v; });
    flag<double>(sub, "--terminal-fraction", "labeling.terminal_fraction", "Share of intervals in the stop window",
                 [](auto& c, auto v) { c.labeling.terminal_fraction = v; });
  }

  void build_base() {
    auto* sub = command("build-base", "Ingest scenario documents into a persisted experience base",
                        [](const mtrx::RunConfig& c) {
                          mtrx::detail::require_path(c.paths.docs, "paths.docs");
                          mtrx::detail::require_path(c.paths.base, "paths.base");
                          const auto n = mtrx::cmd_build_base(c, c.paths.docs, c.paths.base);
                          std::cerr << "stored " << n << " documents -> " << c.paths.base << "\n";
                        });
    flag<std::string>(sub, "--docs", "paths.docs", "Documents (JSON Lines)",
                      [](auto& c, const auto& v) { c.paths.docs = v; });
    flag<std::string>(sub, "--base", "paths.base", "Output base file",
                      [](auto& c, const auto& v) { c.paths.base = v; });
    encoder_flags(sub);
  }

  void retrieve() {
    auto* sub = command("retrieve", "Print the top-k documents for a query as TSV", [this](const mtrx::RunConfig& c) {
      mtrx::detail::require_path(c.paths.base, "paths.base");
      mtrx::cmd_retrieve(c, c.paths.base, query_, c.retrieval.k, std::cout);
    });
    sub->add_option("-q,--query", query_, "Query text (no config key)")->required();
    flag<std::string>(sub, "--base", "paths.base", "Base file", [](auto& c, const auto& v) { c.paths.base = v; });
    flag<std::size_t>(sub, "-k,--k", "retrieval.k", "Number of results", [](auto& c, auto v) { c.retrieval.k = v; });
    encoder_flags(sub);
  }

  void run() {
    auto* sub = command("run", "Run agent episodes and write reasoning traces", [this](const mtrx::RunConfig& c) {
      mtrx::detail::require_path(c.paths.scenarios, "paths.scenarios");
      mtrx::detail::require_path(c.paths.traces, "paths.traces");
      mtrx::RunPaths p{c.paths.base, c.paths.scenarios, c.paths.traces, c.paths.fixture_root, c.paths.crops};
      if (no_base_) p.base.clear();
      const auto n = mtrx::cmd_run(c, p);
      std::cerr << "ran " << n << " episodes -> " << c.paths.traces << "\n";
    });
    flag<std::string>(sub, "--base", "paths.base", "Experience base file",
                      [](auto& c, const auto& v) { c.paths.base = v; });
    sub->add_flag("--no-base", no_base_, "Run without retrieved experience (no config key)");
    flag<std::string>(sub, "--scenarios", "paths.scenarios", "Observations (JSON Lines)",
                      [](auto& c, const auto& v) { c.paths.scenarios = v; });
    flag<std::string>(sub, "-o,--traces", "paths.traces", "Output traces (JSON Lines)",
                      [](auto& c, const auto& v) { c.paths.traces = v; });
    flag<std::string>(sub, "--fixture-root", "paths.fixture_root", "Directory image refs resolve against",
                      [](auto& c, const auto& v) { c.paths.fixture_root = v; });
    flag<std::string>(sub, "--crops", "paths.crops", "Directory for crop_image outputs",
                      [](auto& c, const auto& v) { c.paths.crops = v; });
    flag<std::string>(sub, "--policy-script", "agent.policy_script", "Scripted policy file",
                      [](auto& c, const auto& v) {
                        c.agent.policy_script = v;
                        c.agent.policy_backend = "script";
                      });
    flag<std::string>(sub, "--policy-url", "agent.policy_url", "Chat-completion policy URL (selects the http backend)",
                      [](auto& c, const auto& v) {
                        c.agent.policy_url = v;
                        c.agent.policy_backend = "http";
                      });
    flag<std::size_t>(sub, "--max-steps", "agent.max_steps", "Tool-call budget per episode",
                      [](auto& c, auto v) { c.agent.max_steps = v; });
    flag<std::size_t>(sub, "--max-turns", "agent.max_turns", "Policy-turn budget per episode",
                      [](auto& c, auto v) { c.agent.max_turns = v; });
    flag<std::size_t>(sub, "-k,--k", "retrieval.k", "Experiences retrieved per episode",
                      [](auto& c, auto v) { c.retrieval.k = v; });
    flag<double>(sub, "--threshold", "retrieval.relevance_threshold", "Relevance gate on cosine score",
                 [](auto& c, auto v) { c.retrieval.relevance_threshold = v; });
    flag<std::size_t>(sub, "-j,--jobs", "agent.jobs", "Concurrent episodes",
                      [](auto& c, auto v) { c.agent.jobs = v; });
    encoder_flags(sub);
  }

  void train_toy() {
    auto* sub = command("train-toy", "Train the tabular GRPO toy policy", [](const mtrx::RunConfig& c) {
      mtrx::detail::require_path(c.paths.policy_out, "paths.policy_out");
      mtrx::detail::require_path(c.paths.curve_out, "paths.curve_out");
      const auto r = mtrx::cmd_train_toy(c, c.paths.policy_out, c.paths.curve_out);
      std::cerr << "p_cite: class0 " << r.policy.p_cite(0) << ", class1 " << r.policy.p_cite(1) << "\n";
    });
    flag<std::string>(sub, "--policy-out", "paths.policy_out", "Trained policy (JSON)",
                      [](auto& c, const auto& v) { c.paths.policy_out = v; });
    flag<std::string>(sub, "--curve-out", "paths.curve_out", "Learning curve (CSV)",
                      [](auto& c, const auto& v) { c.paths.curve_out = v; });
    flag<std::size_t>(sub, "--iterations", "grpo.iterations", "Training iterations",
                      [](auto& c, auto v) { c.grpo.iterations = v; });
    flag<std::uint64_t>(sub, "--seed", "grpo.seed", "RNG seed", [](auto& c, auto v) { c.grpo.seed = v; });
    flag<double>(sub, "--lambda", "grpo.lambda", "Format-reward weight", [](auto& c, auto v) { c.grpo.lambda = v; });
    flag<std::size_t>(sub, "--group-size", "grpo.group_size", "Rollouts per scenario",
                      [](auto& c, auto v) { c.grpo.grpo.group_size = v; });
    flag<double>(sub, "--beta", "grpo.beta", "KL coefficient", [](auto& c, auto v) { c.grpo.grpo.beta = v; });
    flag<double>(sub, "--epsilon", "grpo.epsilon", "Ratio clip range",
                 [](auto& c, auto v) { c.grpo.grpo.clip_eps = v; });
    flag<double>(sub, "--learning-rate", "grpo.learning_rate", "Gradient-ascent step size",
                 [](auto& c, auto v) { c.grpo.learning_rate = v; });
    flag<std::size_t>(sub, "--inner-steps", "grpo.inner_steps", "Updates per sampled batch",
                      [](auto& c, auto v) { c.grpo.inner_steps = v; });
    flag<std::size_t>(sub, "--scenarios-per-class", "grpo.scenarios_per_class", "Synthetic scenarios per class",
                      [](auto& c, auto v) { c.grpo.scenarios_per_class = v; });
  }

  void eval() {
    auto* sub = command("eval", "Score predictions and write a report", [](const mtrx::RunConfig& c) {
      mtrx::detail::require_path(c.paths.records, "paths.records");
      mtrx::detail::require_path(c.paths.report, "paths.report");
      std::cout << mtrx::cmd_eval(c, c.paths.records, c.paths.report);
    });
    flag<std::string>(sub, "--records", "paths.records", "Evaluation records (JSON Lines)",
                      [](auto& c, const auto& v) { c.paths.records = v; });
    flag<std::string>(sub, "-o,--report", "paths.report", "Output CSV report",
                      [](auto& c, const auto& v) { c.paths.report = v; });
    flag<std::string>(sub, "--rubric", "judge.rubric", "Keyword rubric for the offline judge",
                      [](auto& c, const auto& v) {
                        c.judge.rubric = v;
                        c.judge.backend = "rubric";
                      });
    flag<std::string>(sub, "--judge-url", "judge.url", "Judge service URL (selects the http backend)",
                      [](auto& c, const auto& v) {
                        c.judge.url = v;
                        c.judge.backend = "http";
                      });
  }

  CLI::App app_;
  std::string config_path_;
  std::string command_;
  std::string query_;
  bool no_base_ = false;
  std::vector<Override> overrides_;
  std::function<void(const mtrx::RunConfig&)> action_;
};

}  // namespace

int main(int argc, char** argv) {
  Cli cli;
  return cli.main(argc, argv);
}
