#include "absteer/matcher.hpp"

#include <cmath>
#include <fstream>

#include "absteer/errors.hpp"

namespace absteer {
using nlohmann::json;
using nlohmann::ordered_json;

CorrectSet build_correct_set(const std::vector<SyllogismInstance>& instances,
                             const std::map<std::string, Validity>& predictions) {
  CorrectSet out;
  for (const auto& inst : instances) {
    if (inst.form != Form::abstract) {
      continue;
    }
    auto it = predictions.find(inst.id);
    if (it == predictions.end()) {
      throw ValidationError("missing prediction for abstract instance '" + inst.id + "'");
    }
    if (it->second == inst.validity) {
      out.ids.insert(inst.id);
    }
  }
  return out;
}

std::string_view to_string(MatchTier t) {
  switch (t) {
    case MatchTier::direct:
      return "direct";
    case MatchTier::schema_fallback:
      return "schema_fallback";
    case MatchTier::validity_fallback:
      return "validity_fallback";
  }
  return "direct";
}

MatchTier parse_tier(std::string_view s) {
  if (s == "direct") return MatchTier::direct;
  if (s == "schema_fallback") return MatchTier::schema_fallback;
  if (s == "validity_fallback") return MatchTier::validity_fallback;
  throw ValidationError("unknown match tier '" + std::string(s) + "'");
}

double cosine(std::span<const float> a, std::span<const float> b) {
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

Matcher::Matcher(const ActivationStore& store, const CorrectSet& cset, int layer)
    : store_(store), layer_(layer) {
  store.layer(layer);  // throws on a missing layer
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& inst = store.instances[i];
    if (inst.form != Form::abstract) {
      continue;
    }
    abstract_by_id_.emplace(inst.id, i);
    if (inst.pair_id) {
      back_links_.emplace(*inst.pair_id, i);
    }
    if (cset.contains(inst.id)) {
      pools_[inst.validity == Validity::valid ? 0 : 1].push_back({i, row_norm(i)});
    }
  }
}

double Matcher::row_norm(std::size_t idx) const {
  double sq = 0.0;
  for (float v : store_.row(layer_, idx)) {
    sq += static_cast<double>(v) * v;
  }
  return std::sqrt(sq);
}

const std::vector<Matcher::Candidate>& Matcher::pool(Validity v) const {
  return pools_[v == Validity::valid ? 0 : 1];
}

double Matcher::cosine_to(std::size_t content_idx, double content_norm, const Candidate& c) const {
  const auto a = store_.row(layer_, content_idx);
  const auto b = store_.row(layer_, c.index);
  double dot = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    dot += static_cast<double>(a[k]) * b[k];
  }
  return dot / (content_norm * c.norm);
}

PositiveMatch Matcher::match_positive(std::size_t content_idx) const {
  const auto& inst = store_.instances.at(content_idx);
  if (inst.form != Form::content) {
    throw ValidationError("'" + inst.id + "' is not a content instance");
  }
  const auto& candidates = pool(inst.validity);
  const double cnorm = row_norm(content_idx);

  std::size_t paired = ActivationStore::npos;
  if (inst.pair_id) {
    auto it = abstract_by_id_.find(*inst.pair_id);
    if (it != abstract_by_id_.end()) {
      paired = it->second;
    }
  } else if (auto it = back_links_.find(inst.id); it != back_links_.end()) {
    paired = it->second;
  }
  if (paired != ActivationStore::npos && store_.instances[paired].schema_id == inst.schema_id) {
    {
      const std::size_t j = paired;
      for (const auto& c : candidates) {
        if (c.index == j) {
          return {j, MatchTier::direct, cosine_to(content_idx, cnorm, c)};
        }
      }
    }
  }

  // Candidates are in ascending index order, so strict '>' keeps the
  // lowest index among ties.
  const Candidate* best_schema = nullptr;
  const Candidate* best_any = nullptr;
  double cos_schema = -2.0;
  double cos_any = -2.0;
  for (const auto& c : candidates) {
    const double cs = cosine_to(content_idx, cnorm, c);
    if (store_.instances[c.index].schema_id == inst.schema_id && cs > cos_schema) {
      cos_schema = cs;
      best_schema = &c;
    }
    if (cs > cos_any) {
      cos_any = cs;
      best_any = &c;
    }
  }
  if (best_schema != nullptr) {
    return {best_schema->index, MatchTier::schema_fallback, cos_schema};
  }
  if (best_any != nullptr) {
    return {best_any->index, MatchTier::validity_fallback, cos_any};
  }
  throw ValidationError("no correctly-answered abstract instance with validity '" +
                        std::string(to_string(inst.validity)) + "' for '" + inst.id + "'");
}

NegativeMatch Matcher::match_negative(std::size_t content_idx) const {
  const auto& inst = store_.instances.at(content_idx);
  const auto& candidates = pool(opposite(inst.validity));
  const double cnorm = row_norm(content_idx);
  const Candidate* best = nullptr;
  double best_cos = -2.0;
  for (const auto& c : candidates) {
    const double cs = cosine_to(content_idx, cnorm, c);
    if (cs > best_cos) {
      best_cos = cs;
      best = &c;
    }
  }
  if (best == nullptr) {
    throw ValidationError("no correctly-answered abstract instance of opposite validity for '" +
                          inst.id + "'");
  }
  return {best->index, best_cos};
}

Triplet Matcher::match(std::size_t content_idx) const {
  const auto pos = match_positive(content_idx);
  const auto neg = match_negative(content_idx);
  return {content_idx, pos.index, neg.index, pos.tier, pos.cosine, neg.cosine};
}

PositiveMatch match_positive(std::size_t content_idx, const ActivationStore& store,
                             const CorrectSet& cset, int layer) {
  return Matcher(store, cset, layer).match_positive(content_idx);
}

NegativeMatch match_negative(std::size_t content_idx, const ActivationStore& store,
                             const CorrectSet& cset, int layer) {
  return Matcher(store, cset, layer).match_negative(content_idx);
}

TripletSet build_triplets(const ActivationStore& store, const CorrectSet& cset, int layer,
                          const std::set<std::string>* content_ids) {
  for (const auto& id : cset.ids) {
    const auto idx = store.index_of(id);
    if (idx == ActivationStore::npos || store.instances[idx].form != Form::abstract) {
      throw ValidationError("correct set member '" + id + "' is not an abstract instance in the store");
    }
  }
  const Matcher matcher(store, cset, layer);
  TripletSet out;
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& inst = store.instances[i];
    if (inst.form != Form::content || (content_ids && !content_ids->count(inst.id))) {
      continue;
    }
    try {
      out.triplets.push_back(matcher.match(i));
    } catch (const ValidationError& e) {
      throw ValidationError("triplet build failed for '" + inst.id + "': " + e.what());
    }
    ++out.tier_counts[static_cast<int>(out.triplets.back().tier)];
  }
  return out;
}

void write_triplets(const TripletSet& set, const ActivationStore& store,
                    const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  for (const auto& t : set.triplets) {
    ordered_json j;
    j["content_id"] = store.instances.at(t.content_idx).id;
    j["pos_id"] = store.instances.at(t.pos_idx).id;
    j["neg_id"] = store.instances.at(t.neg_idx).id;
    j["tier"] = to_string(t.tier);
    j["cosine_pos"] = t.cosine_pos;
    j["cosine_neg"] = t.cosine_neg;
    out << j.dump() << '\n';
  }
}

TripletSet read_triplets(const std::filesystem::path& path, const ActivationStore& store) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("missing triplet file " + path.string());
  }
  TripletSet out;
  std::string line;
  std::size_t lineno = 0;
  auto index = [&](const std::string& id) {
    const auto i = store.index_of(id);
    if (i == ActivationStore::npos) {
      throw ValidationError("triplet references unknown id '" + id + "'");
    }
    return i;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) {
      continue;
    }
    try {
      const json j = json::parse(line);
      Triplet t;
      t.content_idx = index(j.at("content_id").get<std::string>());
      t.pos_idx = index(j.at("pos_id").get<std::string>());
      t.neg_idx = index(j.at("neg_id").get<std::string>());
      t.tier = parse_tier(j.at("tier").get<std::string>());
      t.cosine_pos = j.at("cosine_pos").get<double>();
      t.cosine_neg = j.at("cosine_neg").get<double>();
      out.triplets.push_back(t);
      ++out.tier_counts[static_cast<int>(t.tier)];
    } catch (const json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  check_triplets(out.triplets, store);
  return out;
}

void check_triplets(const std::vector<Triplet>& triplets, const ActivationStore& store) {
  for (const auto& t : triplets) {
    const auto& c = store.instances.at(t.content_idx);
    const auto& p = store.instances.at(t.pos_idx);
    const auto& n = store.instances.at(t.neg_idx);
    if (c.form != Form::content || p.form != Form::abstract || n.form != Form::abstract) {
      throw ValidationError("triplet for '" + c.id + "' mixes up content/abstract roles");
    }
    if (p.validity != c.validity || n.validity == c.validity || t.pos_idx == t.neg_idx) {
      throw ValidationError("triplet for '" + c.id + "' breaks the validity rule");
    }
    const bool linked = (c.pair_id && *c.pair_id == p.id) || (!c.pair_id && p.pair_id && *p.pair_id == c.id);
    if (t.tier == MatchTier::direct && !linked) {
      throw ValidationError("direct triplet for '" + c.id + "' does not use the paired counterpart");
    }
  }
}

}  // namespace absteer
