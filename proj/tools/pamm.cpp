// pamm: train, verify and ablate the multi-task network on synthetic scenes.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "pamm/harness/ablation.hpp"
#include "pamm/harness/grad_check.hpp"
#include "pamm/harness/train.hpp"
#include "pamm/hilbert.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 2;
constexpr int kNumeric = 3;

using namespace pamm;
using namespace pamm::harness;

void log_line(const std::string& s) { std::cerr << s << '\n'; }

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

int cmd_train(const std::string& config_path, const std::string& out_path) {
  Config config = Config::load(config_path);
  const RunReport report = train_and_evaluate(config, log_line);
  report.save(out_path);
  std::cout << "initial_train_loss " << report.initial_train_loss << '\n'
            << "final_train_loss " << report.final_train_loss << '\n';
  for (const auto& [name, value] : report.final_metrics) {
    std::cout << name << ' ' << value << " (trivial " << report.trivial_metrics.at(name) << ")\n";
  }
  if (report.baseline) {
    std::cout << "delta_g vs " << report.baseline->name << ' ' << report.baseline->delta_g << '\n';
  }
  return kOk;
}

int cmd_grad_check(const std::string& config_path) {
  const GradCheckResult r = run_grad_check(Config::load(config_path));
  for (const auto& g : r.groups) {
    std::cout << g.name << " checked=" << g.checked << '/' << g.numel
              << " kinked=" << g.kinked << " max_rel=" << g.max_rel_error << " max_abs=" << g.max_abs_error << '\n';
  }
  std::cout << (r.passed ? "PASS" : "FAIL") << " max_rel_error=" << r.max_rel_error
            << " tolerance=" << r.tolerance << " groups=" << r.groups.size() << '\n';
  return r.passed ? kOk : kValidation;
}

int cmd_hilbert(std::size_t h, std::size_t w, int direction, const std::string& out_path) {
  const ScanOrder order = make_scan_order(static_cast<int>(h), static_cast<int>(w), direction);
  nlohmann::json visit = nlohmann::json::array();
  for (const auto& c : order.visit) visit.push_back({c.row, c.col});
  write_json(out_path, {{"direction", direction}, {"height", h}, {"width", w}, {"visit", visit}});
  return kOk;
}

int cmd_ablate(const std::string& toggle, const std::string& config_path) {
  const Toggle t = toggle_from_string(toggle);
  const AblationResult r = run_ablation(Config::load(config_path), t, log_line);
  nlohmann::json out{{"toggle", to_string(t)},
                     {"full", r.full.final_metrics},
                     {"variant", r.variant.final_metrics},
                     {"delta_g", r.delta_g}};
  std::cout << out.dump(2) << '\n';
  return kOk;
}

int cmd_delta_g(const std::string& ours_path, const std::string& base_path) {
  const RunReport ours = RunReport::load(ours_path);
  const RunReport base = RunReport::load(base_path);
  std::cout << compute_delta_g(ours.final_metrics, base.final_metrics, ours.tasks) << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Parameter-aware Mamba experts for multi-task dense prediction"};
  app.require_subcommand(1);

  std::string config_path, out_path, toggle, ours_path, base_path;
  std::size_t height = 0, width = 0;
  int direction = 1;

  auto* train = app.add_subcommand("train", "train and evaluate, write a run report");
  train->add_option("--config", config_path, "config JSON")->required();
  train->add_option("--out", out_path, "report JSON")->required();

  auto* grad = app.add_subcommand("grad-check", "finite-difference gradient verification");
  grad->add_option("--config", config_path, "config JSON")->required();

  auto* hilbert = app.add_subcommand("hilbert", "dump a Hilbert scan order");
  hilbert->add_option("--height", height)->required();
  hilbert->add_option("--width", width)->required();
  hilbert->add_option("--direction", direction)->required();
  hilbert->add_option("--out", out_path)->required();

  auto* ablate = app.add_subcommand("ablate", "train full and toggled model, print delta_g");
  ablate->add_option("--toggle", toggle)
      ->required()
      ->check(CLI::IsMember({"pe", "pp", "mdhs-dirs", "topk"}));
  ablate->add_option("--config", config_path, "config JSON")->required();

  auto* delta = app.add_subcommand("delta-g", "multi-task gain of one report over another");
  delta->add_option("--ours", ours_path)->required();
  delta->add_option("--base", base_path)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kValidation;
  }

  try {
    if (*train) return cmd_train(config_path, out_path);
    if (*grad) return cmd_grad_check(config_path);
    if (*hilbert) return cmd_hilbert(height, width, direction, out_path);
    if (*ablate) return cmd_ablate(toggle, config_path);
    if (*delta) return cmd_delta_g(ours_path, base_path);
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kValidation;
  }
  return kValidation;
}
