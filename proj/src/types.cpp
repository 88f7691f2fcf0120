#include "absteer/types.hpp"

#include "absteer/errors.hpp"

namespace absteer {

std::string_view to_string(Validity v) { return v == Validity::valid ? "valid" : "invalid"; }

std::string_view to_string(Plausibility p) {
  switch (p) {
    case Plausibility::plausible:
      return "plausible";
    case Plausibility::implausible:
      return "implausible";
    case Plausibility::none:
      return "none";
  }
  return "none";
}

std::string_view to_string(Form f) { return f == Form::content ? "content" : "abstract"; }

Validity parse_validity(std::string_view s) {
  if (s == "valid") return Validity::valid;
  if (s == "invalid") return Validity::invalid;
  throw ValidationError("unknown validity '" + std::string(s) + "'");
}

Plausibility parse_plausibility(std::string_view s) {
  if (s == "plausible") return Plausibility::plausible;
  if (s == "implausible") return Plausibility::implausible;
  if (s == "none") return Plausibility::none;
  throw ValidationError("unknown plausibility '" + std::string(s) + "'");
}

Form parse_form(std::string_view s) {
  if (s == "content") return Form::content;
  if (s == "abstract") return Form::abstract;
  throw ValidationError("unknown form '" + std::string(s) + "'");
}

void check_instance(const SyllogismInstance& inst) {
  if (inst.id.empty()) {
    throw ValidationError("instance with empty id");
  }
  if (inst.form == Form::abstract && inst.plausibility != Plausibility::none) {
    throw ValidationError("abstract instance '" + inst.id + "' carries a plausibility label");
  }
  if (inst.seq_len <= 0 || inst.t_start < 0 || inst.t_start >= inst.seq_len) {
    throw ValidationError("instance '" + inst.id + "': need 0 <= t_start < seq_len");
  }
}

nlohmann::ordered_json to_json(const SyllogismInstance& inst) {
  nlohmann::ordered_json j;
  j["id"] = inst.id;
  j["language"] = inst.language;
  j["schema_id"] = inst.schema_id;
  j["validity"] = to_string(inst.validity);
  if (inst.plausibility == Plausibility::none) {
    j["plausibility"] = nullptr;
  } else {
    j["plausibility"] = to_string(inst.plausibility);
  }
  j["form"] = to_string(inst.form);
  if (inst.pair_id) {
    j["pair_id"] = *inst.pair_id;
  } else {
    j["pair_id"] = nullptr;
  }
  j["text"] = inst.text;
  j["t_start"] = inst.t_start;
  j["seq_len"] = inst.seq_len;
  return j;
}

SyllogismInstance instance_from_json(const nlohmann::json& j) {
  static constexpr const char* kKeys[] = {"id",   "language", "schema_id", "validity", "plausibility",
                                          "form", "pair_id",  "text",      "t_start",  "seq_len"};
  if (!j.is_object() || j.size() != std::size(kKeys)) {
    throw ValidationError("instance record must be an object with exactly 10 keys");
  }
  for (const char* key : kKeys) {
    if (!j.contains(key)) {
      throw ValidationError(std::string("instance record missing key '") + key + "'");
    }
  }
  try {
    SyllogismInstance inst;
    inst.id = j.at("id").get<std::string>();
    inst.language = j.at("language").get<std::string>();
    inst.schema_id = j.at("schema_id").get<std::string>();
    inst.validity = parse_validity(j.at("validity").get<std::string>());
    const auto& p = j.at("plausibility");
    inst.plausibility = p.is_null() ? Plausibility::none : parse_plausibility(p.get<std::string>());
    inst.form = parse_form(j.at("form").get<std::string>());
    const auto& pair = j.at("pair_id");
    if (!pair.is_null()) {
      inst.pair_id = pair.get<std::string>();
    }
    inst.text = j.at("text").get<std::string>();
    inst.t_start = j.at("t_start").get<int>();
    inst.seq_len = j.at("seq_len").get<int>();
    check_instance(inst);
    return inst;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed instance record: ") + e.what());
  }
}

}  // namespace absteer
