#include "ftg/gate.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace ftg {
namespace {

using nlohmann::json;

std::size_t idx(ResponseClass c) { return static_cast<std::size_t>(c); }

}  // namespace

std::string_view to_string(ActionKind a) {
  switch (a) {
    case ActionKind::Continue: return "continue";
    case ActionKind::Terminate: return "terminate";
    case ActionKind::Route: return "route";
  }
  return "continue";
}

std::string_view to_string(GateReason r) {
  switch (r) {
    case GateReason::Confident: return "confident";
    case GateReason::LowAgreement: return "low-agreement";
    case GateReason::FarFromTraining: return "far-from-training";
  }
  return "confident";
}

GatePolicy::GatePolicy(std::array<GateAction, kNumClasses> actions, double min_agreement,
                       std::optional<double> max_mean_distance)
    : actions_(std::move(actions)),
      min_agreement_(min_agreement),
      max_mean_distance_(max_mean_distance) {
  if (actions_[idx(ResponseClass::Chat)].kind != ActionKind::Continue) {
    throw Error(ErrorCode::InvalidPolicy, "chat must map to continue");
  }
  if (min_agreement_ <= 0.0 || min_agreement_ > 1.0) {
    throw Error(ErrorCode::InvalidPolicy, "min_agreement must be in (0, 1]");
  }
  if (max_mean_distance_ && *max_mean_distance_ <= 0.0) {
    throw Error(ErrorCode::InvalidPolicy, "max_mean_distance must be positive");
  }
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const auto& a = actions_[c];
    if (a.kind == ActionKind::Terminate && a.template_text.empty()) {
      throw Error(ErrorCode::InvalidPolicy,
                  "terminate action needs a template (" +
                      std::string(to_string(static_cast<ResponseClass>(c))) + ")");
    }
    if (a.kind == ActionKind::Route && a.route_target.empty()) {
      throw Error(ErrorCode::InvalidPolicy, "route action needs a target");
    }
  }
}

bool GatePolicy::any_route() const {
  for (const auto& a : actions_) {
    if (a.kind == ActionKind::Route) return true;
  }
  return false;
}

GatePolicy GatePolicy::from_json(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw Error(ErrorCode::InvalidPolicy, "policy file is not a JSON object");
  }
  try {
    std::array<GateAction, kNumClasses> actions{};  // default all-continue
    if (j.contains("actions")) {
      for (const auto& [name, spec] : j["actions"].items()) {
        auto c = parse_response_class(name);
        if (!c) throw Error(ErrorCode::InvalidPolicy, "unknown class '" + name + "'");
        GateAction a;
        auto kind = spec.at("kind").get<std::string>();
        if (kind == "continue") {
          a.kind = ActionKind::Continue;
        } else if (kind == "terminate") {
          a.kind = ActionKind::Terminate;
          a.template_text = spec.value("template", std::string());
        } else if (kind == "route") {
          a.kind = ActionKind::Route;
          a.route_target = spec.value("target", std::string());
        } else {
          throw Error(ErrorCode::InvalidPolicy, "unknown action kind '" + kind + "'");
        }
        actions[idx(*c)] = std::move(a);
      }
    }
    double min_agreement = j.value("min_agreement", 1.0);
    std::optional<double> max_mean_distance;
    if (j.contains("max_mean_distance") && !j["max_mean_distance"].is_null()) {
      max_mean_distance = j["max_mean_distance"].get<double>();
    }
    return GatePolicy(std::move(actions), min_agreement, max_mean_distance);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidPolicy, e.what());
  }
}

GatePolicy GatePolicy::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidPolicy, "cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json(buf.str());
}

GateDecision decide(const Prediction& pred, const GatePolicy& policy) {
  GateDecision d;
  d.predicted = pred.label;
  d.agreement = pred.agreement;
  d.mean_distance = pred.mean_neighbor_distance;
  if (pred.agreement < policy.min_agreement()) {
    d.reason = GateReason::LowAgreement;
    d.action = GateAction{};  // Continue
    return d;
  }
  if (policy.max_mean_distance() && pred.mean_neighbor_distance > *policy.max_mean_distance()) {
    d.reason = GateReason::FarFromTraining;
    d.action = GateAction{};
    return d;
  }
  d.reason = GateReason::Confident;
  d.action = policy.action_for(pred.label);
  return d;
}

SavingsReport estimate_savings(const std::vector<SavingsRecord>& records, double cost_per_token) {
  if (records.empty()) throw Error(ErrorCode::EmptyInput, "no decisions");
  SavingsReport report;
  report.total_records = records.size();
  for (const auto& rec : records) {
    if (rec.full_response_tokens < 1) {
      throw Error(ErrorCode::EmptyInput, "token counts must be >= 1");
    }
    report.total_tokens += rec.full_response_tokens;
    ActionKind kind = rec.decision.action.kind;
    if (kind == ActionKind::Continue) continue;
    ++report.short_circuits;
    if (kind == ActionKind::Terminate && rec.true_label == ResponseClass::Chat) {
      ++report.false_terminates;
      continue;  // a wrong suppression saves nothing
    }
    if (rec.decision.predicted == rec.true_label) {
      std::size_t saved = rec.full_response_tokens - 1;  // the probe token is spent
      report.tokens_saved += saved;
      report.tokens_saved_per_class[idx(rec.true_label)] += saved;
    }
  }
  report.savings_fraction =
      report.total_tokens ? double(report.tokens_saved) / double(report.total_tokens) : 0.0;
  report.cost_saved = double(report.tokens_saved) * cost_per_token;
  return report;
}

}  // namespace ftg
