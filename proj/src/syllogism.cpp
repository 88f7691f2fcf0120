#include "absteer/syllogism.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "absteer/errors.hpp"

namespace absteer {
using nlohmann::json;

char mood_letter(Mood m) { return "AEIO"[static_cast<int>(m)]; }

Mood parse_mood(char c) {
  switch (c) {
    case 'A':
      return Mood::A;
    case 'E':
      return Mood::E;
    case 'I':
      return Mood::I;
    case 'O':
      return Mood::O;
    default:
      throw ValidationError(std::string("unknown mood '") + c + "'");
  }
}

namespace {

struct TermRoles {
  std::string subject, middle, predicate;
};

TermRoles roles_of(const Syllogism& s) {
  const Proposition* props[] = {&s.premise1, &s.premise2, &s.conclusion};
  std::set<std::string> terms;
  for (const auto* p : props) {
    if (p->subject.empty() || p->predicate.empty()) {
      throw ValidationError("syllogism has an empty term");
    }
    if (p->subject == p->predicate) {
      throw ValidationError("proposition subject equals predicate ('" + p->subject + "')");
    }
    terms.insert(p->subject);
    terms.insert(p->predicate);
  }
  if (terms.size() != 3) {
    throw ValidationError("syllogism must use exactly three distinct terms, found " +
                          std::to_string(terms.size()));
  }
  TermRoles r;
  r.subject = s.conclusion.subject;
  r.predicate = s.conclusion.predicate;
  for (const auto& t : terms) {
    if (t != r.subject && t != r.predicate) {
      r.middle = t;
    }
  }
  auto mentions = [](const Proposition& p, const std::string& t) {
    return p.subject == t || p.predicate == t;
  };
  if (!mentions(s.premise1, r.middle) || !mentions(s.premise2, r.middle)) {
    throw ValidationError("middle term '" + r.middle + "' must appear in both premises");
  }
  return r;
}

// Region bits: 1 = subject term, 2 = middle term, 4 = predicate term.
int term_bit(const TermRoles& r, const std::string& t) {
  if (t == r.subject) return 1;
  if (t == r.middle) return 2;
  return 4;
}

bool holds(const Proposition& p, const TermRoles& r, unsigned pattern) {
  const int x = term_bit(r, p.subject);
  const int y = term_bit(r, p.predicate);
  bool x_and_y = false;
  bool x_not_y = false;
  for (int region = 0; region < 8; ++region) {
    if (!(pattern & (1U << region)) || !(region & x)) {
      continue;
    }
    (region & y ? x_and_y : x_not_y) = true;
  }
  switch (p.mood) {
    case Mood::A:
      return !x_not_y;
    case Mood::E:
      return !x_and_y;
    case Mood::I:
      return x_and_y;
    case Mood::O:
      return x_not_y;
  }
  return false;
}

bool all_terms_inhabited(unsigned pattern) {
  int seen = 0;
  for (int region = 0; region < 8; ++region) {
    if (pattern & (1U << region)) {
      seen |= region;
    }
  }
  return seen == 7;
}

Proposition make_prop(Mood m, const std::string& s, const std::string& p) { return {m, s, p}; }

}  // namespace

void check_syllogism(const Syllogism& s) { roles_of(s); }

Validity decide_validity(const Syllogism& s, bool existential_import) {
  const TermRoles r = roles_of(s);
  for (unsigned pattern = 0; pattern < 256; ++pattern) {
    if (existential_import && !all_terms_inhabited(pattern)) {
      continue;
    }
    if (holds(s.premise1, r, pattern) && holds(s.premise2, r, pattern) &&
        !holds(s.conclusion, r, pattern)) {
      return Validity::invalid;
    }
  }
  return Validity::valid;
}

Syllogism make_syllogism(const std::array<Mood, 3>& moods, int figure,
                         const std::array<std::string, 3>& terms) {
  const auto& [S, M, P] = terms;
  Syllogism s;
  switch (figure) {
    case 1:
      s.premise1 = make_prop(moods[0], M, P);
      s.premise2 = make_prop(moods[1], S, M);
      break;
    case 2:
      s.premise1 = make_prop(moods[0], P, M);
      s.premise2 = make_prop(moods[1], S, M);
      break;
    case 3:
      s.premise1 = make_prop(moods[0], M, P);
      s.premise2 = make_prop(moods[1], M, S);
      break;
    case 4:
      s.premise1 = make_prop(moods[0], P, M);
      s.premise2 = make_prop(moods[1], M, S);
      break;
    default:
      throw ValidationError("figure must be 1..4, got " + std::to_string(figure));
  }
  s.conclusion = make_prop(moods[2], S, P);
  return s;
}

const Schema& SchemaCatalog::find(const std::string& id) const {
  for (const auto& schema : schemas) {
    if (schema.id == id) {
      return schema;
    }
  }
  throw ValidationError("unknown schema '" + id + "'");
}

SchemaCatalog enumerate_schemas(int catalog_size, bool existential_import) {
  if (catalog_size != 24 && catalog_size != 256) {
    throw ValidationError("catalog size must be 24 or 256, got " + std::to_string(catalog_size));
  }
  static const std::array<std::string, 3> kSymbols = {"S", "M", "P"};
  std::vector<Schema> all;
  all.reserve(256);
  for (int figure = 1; figure <= 4; ++figure) {
    for (int a = 0; a < 4; ++a) {
      for (int b = 0; b < 4; ++b) {
        for (int c = 0; c < 4; ++c) {
          Schema schema;
          schema.moods = {static_cast<Mood>(a), static_cast<Mood>(b), static_cast<Mood>(c)};
          schema.figure = figure;
          schema.id = {mood_letter(schema.moods[0]), mood_letter(schema.moods[1]),
                       mood_letter(schema.moods[2]), '-', static_cast<char>('0' + figure)};
          schema.validity =
              decide_validity(make_syllogism(schema.moods, figure, kSymbols), existential_import);
          all.push_back(std::move(schema));
        }
      }
    }
  }
  SchemaCatalog catalog;
  catalog.existential_import = existential_import;
  if (catalog_size == 256) {
    catalog.schemas = std::move(all);
    return catalog;
  }
  int valid = 0;
  int invalid = 0;
  for (auto& schema : all) {
    int& count = schema.validity == Validity::valid ? valid : invalid;
    if (count < 12) {
      ++count;
      catalog.schemas.push_back(schema);
    }
  }
  if (valid != 12 || invalid != 12) {
    throw ValidationError("cannot build a balanced 24-schema catalog under this convention");
  }
  return catalog;
}

Templates Templates::english() {
  Templates t;
  t.language = "en";
  t.patterns = {{Mood::A, "All {S} are {P}."},
                {Mood::E, "No {S} are {P}."},
                {Mood::I, "Some {S} are {P}."},
                {Mood::O, "Some {S} are not {P}."}};
  return t;
}

Templates Templates::from_json(const json& j) {
  Templates t;
  try {
    for (const char c : {'A', 'E', 'I', 'O'}) {
      const std::string key(1, c);
      if (!j.contains(key)) {
        throw ValidationError("template file lacks mood " + key);
      }
      t.patterns[parse_mood(c)] = j.at(key).get<std::string>();
    }
    if (j.contains("therefore")) {
      t.therefore = j.at("therefore").get<std::string>();
    }
    if (j.contains("language")) {
      t.language = j.at("language").get<std::string>();
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed template file: ") + e.what());
  }
  for (const auto& [mood, pattern] : t.patterns) {
    if (pattern.find("{S}") == std::string::npos || pattern.find("{P}") == std::string::npos) {
      throw ValidationError(std::string("template for mood ") + mood_letter(mood) +
                            " needs {S} and {P}");
    }
  }
  return t;
}

Templates Templates::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("missing template file " + path.string());
  }
  try {
    return from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::string Templates::render(const Proposition& p) const {
  std::string out = patterns.at(p.mood);
  auto replace = [&out](const std::string& key, const std::string& value) {
    for (auto pos = out.find(key); pos != std::string::npos; pos = out.find(key, pos + value.size())) {
      out.replace(pos, key.size(), value);
    }
  };
  replace("{S}", p.subject);
  replace("{P}", p.predicate);
  return out;
}

std::string render_syllogism(const Syllogism& s, const Templates& templates) {
  std::string conclusion = templates.render(s.conclusion);
  if (!templates.therefore.empty() && !conclusion.empty()) {
    conclusion[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(conclusion[0])));
  }
  return templates.render(s.premise2) + " " + templates.render(s.premise1) + " " +
         templates.therefore + conclusion;
}

namespace {

int count_words(const std::string& text) {
  std::istringstream in(text);
  int n = 0;
  for (std::string w; in >> w;) {
    ++n;
  }
  return std::max(n, 1);
}

}  // namespace

SyllogismInstance instantiate(const SchemaCatalog& catalog, const std::string& schema_id,
                              const std::array<std::string, 3>& terms, Plausibility plausibility,
                              const Templates& templates, const std::string& id) {
  const Schema& schema = catalog.find(schema_id);
  if (terms[0] == terms[1] || terms[1] == terms[2] || terms[0] == terms[2]) {
    throw ValidationError("instantiate: terms must be distinct");
  }
  if (plausibility == Plausibility::none) {
    throw ValidationError("instantiate: content instances need a plausibility label");
  }
  const Syllogism s = make_syllogism(schema.moods, schema.figure, terms);
  SyllogismInstance inst;
  inst.id = id;
  inst.language = templates.language;
  inst.schema_id = schema.id;
  inst.validity = decide_validity(s, catalog.existential_import);
  inst.plausibility = plausibility;
  inst.form = Form::content;
  inst.text = render_syllogism(s, templates);
  // Token positions are provisional until the extraction harness tokenizes
  // the prompt.
  inst.t_start = 0;
  inst.seq_len = count_words(inst.text);
  return inst;
}

AbstractPair abstractify(const SyllogismInstance& inst, const SchemaCatalog& catalog,
                         const Templates& templates) {
  if (inst.form != Form::content) {
    throw ValidationError("abstractify: '" + inst.id + "' is already abstract");
  }
  const Schema& schema = catalog.find(inst.schema_id);
  // The minor premise is rendered first, so its two terms take X and Y in
  // the order they are written and the remaining term takes Z.
  const Syllogism roles = make_syllogism(schema.moods, schema.figure, {"S", "M", "P"});
  std::map<std::string, std::string> symbol{{roles.premise2.subject, "X"}, {roles.premise2.predicate, "Y"}};
  for (const char* t : {"S", "M", "P"}) {
    symbol.emplace(t, "Z");
  }
  const Syllogism s = make_syllogism(schema.moods, schema.figure, {symbol["S"], symbol["M"], symbol["P"]});
  AbstractPair out;
  out.content = inst;
  out.abstract.id = inst.id + "-abs";
  out.abstract.language = inst.language;
  out.abstract.schema_id = inst.schema_id;
  out.abstract.validity = decide_validity(s, catalog.existential_import);
  out.abstract.plausibility = Plausibility::none;
  out.abstract.form = Form::abstract;
  out.abstract.text = render_syllogism(s, templates);
  out.abstract.t_start = 0;
  out.abstract.seq_len = count_words(out.abstract.text);
  out.content.pair_id = out.abstract.id;
  out.abstract.pair_id = out.content.id;
  if (out.abstract.validity != inst.validity) {
    throw ValidationError("abstractify: '" + inst.id + "' carries validity inconsistent with its schema");
  }
  return out;
}

bool TermEntry::plausible_for(Mood conclusion) const {
  auto it = plausible.find(conclusion);
  if (it == plausible.end()) {
    throw ValidationError(std::string("term entry lacks plausibility for conclusion mood ") +
                          mood_letter(conclusion));
  }
  return it->second;
}

std::vector<TermEntry> read_term_bank(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("missing term bank " + path.string());
  }
  std::vector<TermEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) {
      continue;
    }
    try {
      const json j = json::parse(line);
      TermEntry e;
      const auto terms = j.at("terms").get<std::vector<std::string>>();
      if (terms.size() != 3) {
        throw ValidationError("terms must hold exactly 3 strings");
      }
      std::copy(terms.begin(), terms.end(), e.terms.begin());
      if (j.contains("plausible_conclusion") == j.contains("plausible")) {
        throw ValidationError("give exactly one of plausible_conclusion and plausible");
      }
      if (j.contains("plausible_conclusion")) {
        const bool p = j.at("plausible_conclusion").get<bool>();
        for (const char c : {'A', 'E', 'I', 'O'}) e.plausible[parse_mood(c)] = p;
      } else {
        const auto& plaus = j.at("plausible");
        for (const char c : {'A', 'E', 'I', 'O'}) {
          e.plausible[parse_mood(c)] = plaus.at(std::string(1, c)).get<bool>();
        }
        if (plaus.size() != 4) {
          throw ValidationError("plausible must map exactly the moods A, E, I, O");
        }
      }
      e.language = j.at("language").get<std::string>();
      out.push_back(std::move(e));
    } catch (const json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<SyllogismInstance> generate_dataset(const SchemaCatalog& catalog,
                                                const std::vector<TermEntry>& bank,
                                                const Templates& templates) {
  std::vector<SyllogismInstance> content;
  std::vector<SyllogismInstance> abstract;
  for (std::size_t e = 0; e < bank.size(); ++e) {
    const auto& entry = bank[e];
    for (const auto& schema : catalog.schemas) {
      const Plausibility p =
          entry.plausible_for(schema.moods[2]) ? Plausibility::plausible : Plausibility::implausible;
      const std::string id = entry.language + "-" + schema.id + "-" + std::to_string(e);
      auto inst = instantiate(catalog, schema.id, entry.terms, p, templates, id);
      inst.language = entry.language;
      auto pair = abstractify(inst, catalog, templates);
      content.push_back(std::move(pair.content));
      abstract.push_back(std::move(pair.abstract));
    }
  }
  content.insert(content.end(), std::make_move_iterator(abstract.begin()),
                 std::make_move_iterator(abstract.end()));
  return content;
}

}  // namespace absteer
