#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "ftg/knn.hpp"
#include "ftg/response_class.hpp"

namespace ftg {

enum class ActionKind { Continue, Terminate, Route };

std::string_view to_string(ActionKind a);

struct GateAction {
  ActionKind kind = ActionKind::Continue;
  std::string template_text;  // Terminate only
  std::string route_target;   // Route only
};

// Per-class actions plus confidence thresholds. Chat always continues.
class GatePolicy {
 public:
  GatePolicy(std::array<GateAction, kNumClasses> actions, double min_agreement,
             std::optional<double> max_mean_distance);

  const GateAction& action_for(ResponseClass c) const {
    return actions_[static_cast<std::size_t>(c)];
  }
  double min_agreement() const { return min_agreement_; }
  std::optional<double> max_mean_distance() const { return max_mean_distance_; }
  bool any_route() const;

  static GatePolicy from_json(const std::string& text);
  static GatePolicy load(const std::string& path);

 private:
  std::array<GateAction, kNumClasses> actions_;
  double min_agreement_;
  std::optional<double> max_mean_distance_;
};

enum class GateReason { Confident, LowAgreement, FarFromTraining };

std::string_view to_string(GateReason r);

struct GateDecision {
  GateAction action;
  ResponseClass predicted;
  double agreement = 0.0;
  double mean_distance = 0.0;
  GateReason reason = GateReason::Confident;
};

// Fail-open: anything below threshold continues with full generation.
GateDecision decide(const Prediction& pred, const GatePolicy& policy);

struct SavingsRecord {
  GateDecision decision;
  ResponseClass true_label;
  std::size_t full_response_tokens = 0;  // >= 1
};

struct SavingsReport {
  std::size_t total_records = 0;
  std::size_t total_tokens = 0;
  std::size_t tokens_saved = 0;
  std::size_t short_circuits = 0;
  std::size_t false_terminates = 0;  // Terminate issued on a true-chat record
  double savings_fraction = 0.0;
  double cost_saved = 0.0;
  std::array<std::size_t, kNumClasses> tokens_saved_per_class{};
};

SavingsReport estimate_savings(const std::vector<SavingsRecord>& records, double cost_per_token);

}  // namespace ftg
