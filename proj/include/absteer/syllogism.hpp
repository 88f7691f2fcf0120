#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "absteer/types.hpp"

namespace absteer {

enum class Mood { A, E, I, O };

char mood_letter(Mood m);
Mood parse_mood(char c);

// A: All S are P.  E: No S are P.  I: Some S are P.  O: Some S are not P.
struct Proposition {
  Mood mood = Mood::A;
  std::string subject;
  std::string predicate;
};

// premise1 is the major premise (contains the conclusion's predicate),
// premise2 the minor premise.
struct Syllogism {
  Proposition premise1;
  Proposition premise2;
  Proposition conclusion;
};

// Throws ValidationError unless the three propositions use exactly three
// distinct terms with the middle term in both premises only.
void check_syllogism(const Syllogism& s);

/// Decides validity by searching all 256 occupancy patterns of the eight
/// Venn regions over the three terms for a countermodel. With existential
/// import, only patterns where every term is inhabited are considered.
Validity decide_validity(const Syllogism& s, bool existential_import = false);

struct Schema {
  std::string id;  // e.g. "AAA-1": major, minor, conclusion mood; figure
  std::array<Mood, 3> moods{};
  int figure = 1;
  Validity validity = Validity::valid;
};

// Builds the schema's syllogism over terms (subject, middle, predicate).
Syllogism make_syllogism(const std::array<Mood, 3>& moods, int figure,
                         const std::array<std::string, 3>& terms);

struct SchemaCatalog {
  std::vector<Schema> schemas;
  bool existential_import = false;

  const Schema& find(const std::string& id) const;
};

/// size 256: every mood triple in every figure. size 24: the first 12 valid
/// and first 12 invalid schemas in (figure, mood triple) order.
SchemaCatalog enumerate_schemas(int catalog_size, bool existential_import = false);

/// Sentence patterns per mood with {S} and {P} placeholders. The conclusion
/// is rendered as `therefore` followed by the pattern with its first letter
/// lowercased.
struct Templates {
  std::string language = "en";
  std::map<Mood, std::string> patterns;
  std::string therefore = "Therefore, ";

  static Templates english();
  static Templates from_json(const nlohmann::json& j);
  static Templates load(const std::filesystem::path& path);

  std::string render(const Proposition& p) const;
};

// Minor premise, major premise, conclusion.
std::string render_syllogism(const Syllogism& s, const Templates& templates);

/// Renders a content instance for `schema_id` over (subject, middle,
/// predicate) terms. validity comes from the catalog.
SyllogismInstance instantiate(const SchemaCatalog& catalog, const std::string& schema_id,
                              const std::array<std::string, 3>& terms, Plausibility plausibility,
                              const Templates& templates, const std::string& id);

struct AbstractPair {
  SyllogismInstance content;   // pair_id set to the abstract id
  SyllogismInstance abstract;  // pair_id set to the content id
};

// Re-renders the instance's schema over symbols X, Y, Z (order of first
// appearance in the rendered text).
AbstractPair abstractify(const SyllogismInstance& inst, const SchemaCatalog& catalog,
                         const Templates& templates);

// A term bank line carries either one `plausible_conclusion` flag applied to
// every schema, or a `plausible` map keyed by conclusion mood (the flag
// cannot be right for both "All S are P" and "No S are P").
struct TermEntry {
  std::array<std::string, 3> terms;  // subject, middle, predicate
  std::map<Mood, bool> plausible;
  std::string language = "en";

  bool plausible_for(Mood conclusion) const;
};

std::vector<TermEntry> read_term_bank(const std::filesystem::path& path);

/// Every schema instantiated with every term entry, followed by the abstract
/// counterparts. Conclusion plausibility is looked up by conclusion mood. Ids are "<lang>-<schema>-<entry>" and "...-abs".
std::vector<SyllogismInstance> generate_dataset(const SchemaCatalog& catalog,
                                                const std::vector<TermEntry>& bank,
                                                const Templates& templates);

}  // namespace absteer
