#include "gridfuse/error.hpp"
#include "gridfuse/log.hpp"
#include "gridfuse/pipeline.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitScenario = 3;
constexpr int kExitInternal = 4;

int fail(int code, const std::string& kind, const std::string& message) {
  std::cerr << nlohmann::json{{"error", kind}, {"message", message}}.dump() << '\n';
  return code;
}

void write_frames_csv(const std::filesystem::path& dir) {
  const std::string frames = (dir / "frames.jsonl").string();
  std::ofstream out(dir / "frames.csv", std::ios::binary);
  std::ifstream in(frames);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::string dump = gridfuse::inspect_frame(frames, n, gridfuse::DumpFormat::csv);
    // Keep the header from the first frame only.
    out << (n == 0 ? dump : dump.substr(dump.find('\n') + 1));
    ++n;
  }
}

}  // namespace

int main(int argc, char** argv) {
  gridfuse::init_logging();
  CLI::App app{"gridfuse: DOGMa object extraction and confidence-gated track fusion"};
  app.require_subcommand(1);
  app.footer(
      "Exit codes: 0 ok, 2 config error (bad flags, config or missing files), "
      "3 scenario error, 4 internal invariant violation.\n"
      "Set GRIDFUSE_LOG=trace|debug|info|warn|error|off for log verbosity.");

  gridfuse::RunOptions opts;
  std::uint64_t seed = 0;
  std::size_t frames = 0;
  std::string run_format = "jsonl";
  auto* run = app.add_subcommand("run", "Run a scenario through the full pipeline");
  run->add_option("--scenario", opts.scenario, "Shipped scenario name or scenario file")
      ->required();
  run->add_option("--out", opts.out_dir, "Output directory")->default_val("out");
  run->add_option("--config", opts.config_path, "Config file (default: shipped defaults)");
  auto* seed_opt = run->add_option("--seed", seed, "Override the scenario seed");
  run->add_option("--override", opts.overrides, "section.key=value, repeatable")
      ->allow_extra_args(false);
  auto* frames_opt = run->add_option("--frames", frames, "Limit on grid frames");
  run->add_option("--format", run_format, "Frame log format (csv adds frames.csv)")
      ->check(CLI::IsMember({"jsonl", "csv"}));

  std::string log_path;
  std::size_t index = 0;
  std::string inspect_format = "text";
  auto* inspect = app.add_subcommand("inspect", "Dump one frame of a frame log");
  inspect->add_option("log", log_path, "frames.jsonl")->required();
  inspect->add_option("index", index, "Frame index")->required();
  inspect->add_option("--format", inspect_format, "Output format")
      ->check(CLI::IsMember({"text", "jsonl", "csv"}));

  gridfuse::RunOptions render_opts;
  std::uint64_t render_seed = 0;
  std::size_t render_frames = 0;
  std::string encoding = "base64";
  auto* render = app.add_subcommand("render", "Write the synthetic sensor streams");
  render->add_option("--scenario", render_opts.scenario, "Scenario name or file")->required();
  render->add_option("--out", render_opts.out_dir, "Output directory")->default_val("streams");
  auto* render_seed_opt = render->add_option("--seed", render_seed, "Override the seed");
  auto* render_frames_opt = render->add_option("--frames", render_frames, "Limit on grid frames");
  render->add_option("--encoding", encoding, "Cell payload encoding")
      ->check(CLI::IsMember({"base64", "sparse"}));

  gridfuse::RunOptions cfg_opts;
  auto* config = app.add_subcommand("config", "Print the effective configuration");
  config->add_option("--config", cfg_opts.config_path, "Config file");
  config->add_option("--override", cfg_opts.overrides, "section.key=value, repeatable");
  bool builtin = false;
  config->add_flag("--builtin", builtin, "Print the compiled-in defaults");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*run) {
      if (*seed_opt) opts.seed = seed;
      if (*frames_opt) opts.frames = frames;
      const auto summary = gridfuse::run_scenario(opts);
      if (run_format == "csv") write_frames_csv(opts.out_dir);
      std::cout << nlohmann::json{{"grid_frames", summary.grid_frames},
                                  {"track_frames", summary.track_frames},
                                  {"metas_created", summary.eval.metas_created},
                                  {"false_accepted", summary.eval.false_accepted},
                                  {"out", opts.out_dir}}
                       .dump()
                << '\n';
    } else if (*inspect) {
      const auto fmt = inspect_format == "jsonl" ? gridfuse::DumpFormat::jsonl
                       : inspect_format == "csv" ? gridfuse::DumpFormat::csv
                                                 : gridfuse::DumpFormat::text;
      std::cout << gridfuse::inspect_frame(log_path, index, fmt);
    } else if (*config) {
      const auto cfg = builtin ? gridfuse::PipelineConfig{}
                               : gridfuse::resolve_config(cfg_opts);
      std::cout << gridfuse::config_to_json(cfg).dump(2) << '\n';
    } else if (*render) {
      if (*render_seed_opt) render_opts.seed = render_seed;
      if (*render_frames_opt) render_opts.frames = render_frames;
      gridfuse::export_streams(render_opts, encoding == "sparse"
                                                ? gridfuse::CellEncoding::sparse
                                                : gridfuse::CellEncoding::base64_f64);
    }
  } catch (const gridfuse::ConfigError& e) {
    return fail(kExitConfig, "config", e.what());
  } catch (const gridfuse::ParseError& e) {
    return fail(kExitConfig, "parse", e.what());
  } catch (const gridfuse::InvalidArgument& e) {
    return fail(kExitConfig, "argument", e.what());
  } catch (const gridfuse::ScenarioError& e) {
    return fail(kExitScenario, "scenario", e.what());
  } catch (const gridfuse::InvariantViolation& e) {
    return fail(kExitInternal, "invariant", e.what());
  } catch (const std::exception& e) {
    return fail(kExitInternal, "internal", e.what());
  }
  return kExitOk;
}
