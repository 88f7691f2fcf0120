#pragma once

#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

namespace absteer {

enum class Validity { valid, invalid };
enum class Plausibility { plausible, implausible, none };
enum class Form { content, abstract };

inline Validity opposite(Validity v) {
  return v == Validity::valid ? Validity::invalid : Validity::valid;
}

std::string_view to_string(Validity v);
std::string_view to_string(Plausibility p);
std::string_view to_string(Form f);
Validity parse_validity(std::string_view s);
Plausibility parse_plausibility(std::string_view s);
Form parse_form(std::string_view s);

/// One annotated syllogism prompt. `t_start` is the token index where the
/// syllogism content begins; the last prompt token sits at `seq_len - 1`.
struct SyllogismInstance {
  std::string id;
  std::string language = "en";
  std::string schema_id;
  Validity validity = Validity::valid;
  Plausibility plausibility = Plausibility::none;
  Form form = Form::content;
  std::optional<std::string> pair_id;
  std::string text;
  int t_start = 0;
  int seq_len = 1;

  bool operator==(const SyllogismInstance&) const = default;
};

// Throws ValidationError when the per-instance invariants do not hold.
void check_instance(const SyllogismInstance& inst);

// instances.jsonl line object; keys in the documented order.
nlohmann::ordered_json to_json(const SyllogismInstance& inst);
SyllogismInstance instance_from_json(const nlohmann::json& j);

}  // namespace absteer
