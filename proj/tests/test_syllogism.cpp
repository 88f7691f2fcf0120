#include <doctest.h>

#include <fstream>

#include "absteer/dataset.hpp"
#include "absteer/errors.hpp"
#include "absteer/syllogism.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace absteer;

namespace {

Syllogism syl(Proposition major, Proposition minor, Proposition conclusion) {
  return {std::move(major), std::move(minor), std::move(conclusion)};
}

std::string schema_name(int a, int b, int c, int figure) {
  return {"AEIO"[a], "AEIO"[b], "AEIO"[c], '-', static_cast<char>('0' + figure)};
}

}  // namespace

TEST_SUITE("syllogism") {
  TEST_CASE("all 256 schemas agree with first-order model enumeration") {
    for (const bool ei : {false, true}) {
      const auto catalog = enumerate_schemas(256, ei);
      REQUIRE(catalog.schemas.size() == 256);
      int valid = 0;
      for (int figure = 1; figure <= 4; ++figure) {
        for (int a = 0; a < 4; ++a) {
          for (int b = 0; b < 4; ++b) {
            for (int c = 0; c < 4; ++c) {
              const bool expected = oracle::fol_valid(oracle::syllogism(a, b, c, figure), ei);
              const auto& schema = catalog.find(schema_name(a, b, c, figure));
              CAPTURE(schema.id);
              CAPTURE(ei);
              CHECK((schema.validity == Validity::valid) == expected);
              const auto s = make_syllogism(schema.moods, schema.figure, {"s", "m", "p"});
              CHECK((decide_validity(s, ei) == Validity::valid) == expected);
              valid += expected;
            }
          }
        }
      }
      // Classical counts: 15 unconditionally valid forms, 24 with import.
      CHECK(valid == (ei ? 24 : 15));
    }
  }

  TEST_CASE("worked examples") {
    const auto dolphins = syl({Mood::A, "F", "D"}, {Mood::A, "dolphins", "F"}, {Mood::A, "dolphins", "D"});
    CHECK(decide_validity(dolphins) == Validity::valid);
    const auto roses = syl({Mood::A, "flowers", "W"}, {Mood::A, "roses", "W"}, {Mood::A, "roses", "flowers"});
    CHECK(decide_validity(roses) == Validity::invalid);
    const auto cows =
        syl({Mood::A, "cows", "mammals"}, {Mood::O, "mammals", "birds"}, {Mood::E, "birds", "cows"});
    CHECK(decide_validity(cows) == Validity::invalid);
    CHECK(decide_validity(cows, true) == Validity::invalid);
    CHECK(enumerate_schemas(256).find("AOE-4").validity == Validity::invalid);
  }

  TEST_CASE("existential import flips subalternate forms") {
    const auto c0 = enumerate_schemas(256, false);
    const auto c1 = enumerate_schemas(256, true);
    CHECK(c0.find("AAA-1").validity == Validity::valid);
    CHECK(c0.find("AAI-1").validity == Validity::invalid);
    CHECK(c1.find("AAI-1").validity == Validity::valid);
    CHECK(c1.find("AAI-3").validity == Validity::valid);  // Darapti
    CHECK(c0.find("AAI-3").validity == Validity::invalid);
  }

  TEST_CASE("malformed syllogisms") {
    CHECK_THROWS_AS(check_syllogism(syl({Mood::A, "a", "b"}, {Mood::A, "c", "d"}, {Mood::A, "c", "b"})),
                    ValidationError);
    CHECK_THROWS_AS(check_syllogism(syl({Mood::A, "a", "a"}, {Mood::A, "c", "a"}, {Mood::A, "c", "a"})),
                    ValidationError);
    CHECK_THROWS_AS(make_syllogism({Mood::A, Mood::A, Mood::A}, 5, {"s", "m", "p"}), ValidationError);
    CHECK_THROWS_AS(parse_mood('X'), ValidationError);
    CHECK_THROWS_AS(enumerate_schemas(30), ValidationError);
  }

  TEST_CASE("24-schema catalog is balanced and stable") {
    const auto a = enumerate_schemas(24);
    const auto b = enumerate_schemas(24);
    REQUIRE(a.schemas.size() == 24);
    int valid = 0;
    for (std::size_t i = 0; i < a.schemas.size(); ++i) {
      CHECK(a.schemas[i].id == b.schemas[i].id);
      valid += a.schemas[i].validity == Validity::valid;
      const auto s = make_syllogism(a.schemas[i].moods, a.schemas[i].figure, {"s", "m", "p"});
      CHECK(decide_validity(s) == a.schemas[i].validity);
    }
    CHECK(valid == 12);
    for (std::size_t i = 1; i < a.schemas.size(); ++i) {
      const auto& p = a.schemas[i - 1];
      const auto& q = a.schemas[i];
      CHECK(std::tie(p.figure, p.moods) < std::tie(q.figure, q.moods));
    }
  }

  TEST_CASE("instantiate renders Barbara") {
    const auto catalog = enumerate_schemas(24);
    const auto inst = instantiate(catalog, "AAA-1", {"flowers", "plants", "living things"},
                                  Plausibility::plausible, Templates::english(), "b1");
    CHECK(inst.text == "All flowers are plants. All plants are living things. Therefore, all flowers are living things.");
    CHECK(inst.validity == Validity::valid);
    CHECK(inst.form == Form::content);
    CHECK(inst.schema_id == "AAA-1");
    CHECK_THROWS_AS(instantiate(catalog, "AAA-1", {"x", "x", "y"}, Plausibility::plausible, Templates::english(), "d"),
                    ValidationError);
    CHECK_THROWS_AS(instantiate(catalog, "ZZZ-9", {"x", "y", "z"}, Plausibility::plausible, Templates::english(), "d"),
                    ValidationError);
  }

  TEST_CASE("abstractify replaces terms in order of appearance") {
    Templates t = Templates::english();
    t.patterns[Mood::A] = "All {S} need {P}.";
    const auto catalog = enumerate_schemas(256);
    const auto inst = instantiate(catalog, "AAA-1", {"flowers", "water", "light"}, Plausibility::plausible, t, "f");
    const auto pair = abstractify(inst, catalog, t);
    CHECK(pair.abstract.text.rfind("All X need Y.", 0) == 0);
    CHECK(pair.abstract.pair_id == inst.id);
    CHECK(pair.content.pair_id == pair.abstract.id);
    CHECK_THROWS_AS(abstractify(pair.abstract, catalog, t), ValidationError);

    for (const auto& schema : catalog.schemas) {
      const auto c = instantiate(catalog, schema.id, {"cats", "dogs", "birds"}, Plausibility::implausible,
                                 Templates::english(), "i");
      const auto a = abstractify(c, catalog, Templates::english()).abstract;
      CAPTURE(a.text);
      CHECK(a.schema_id == c.schema_id);
      CHECK(a.validity == c.validity);
      CHECK(a.plausibility == Plausibility::none);
      const auto x = a.text.find('X'), y = a.text.find('Y'), z = a.text.find('Z');
      REQUIRE(z != std::string::npos);
      CHECK(x < y);
      CHECK(y < z);
    }
  }

  TEST_CASE("24 schemas over 10 term triples") {
    const auto catalog = enumerate_schemas(24);
    std::vector<TermEntry> bank;
    for (int i = 0; i < 10; ++i) {
      TermEntry e;
      e.terms = {"s" + std::to_string(i), "m" + std::to_string(i), "p" + std::to_string(i)};
      e.plausible = {{Mood::A, i % 2 == 0}, {Mood::E, i % 2 == 1}, {Mood::I, true}, {Mood::O, false}};
      bank.push_back(e);
    }
    const auto data = generate_dataset(catalog, bank, Templates::english());
    REQUIRE(data.size() == 480);
    std::size_t content = 0, valid = 0;
    for (const auto& x : data) {
      CHECK_NOTHROW(check_instance(x));
      if (x.form == Form::content) {
        ++content;
        valid += x.validity == Validity::valid;
      }
    }
    CHECK(content == 240);
    CHECK(valid == 120);
    const auto pairing = pair_instances(data);
    CHECK(pairing.content_to_abstract.size() == 240);
    CHECK(pairing.unpaired.empty());
  }

  TEST_CASE("term bank accepts both plausibility encodings") {
    fixtures::TempDir dir("terms");
    {
      std::ofstream out(dir / "bank.jsonl");
      out << R"({"terms": ["a", "b", "c"], "plausible_conclusion": true, "language": "en"})" << "\n";
      out << R"({"terms": ["d", "e", "f"], "plausible": {"A": false, "E": true, "I": false, "O": true}, "language": "de"})"
          << "\n";
    }
    const auto bank = read_term_bank(dir / "bank.jsonl");
    REQUIRE(bank.size() == 2);
    for (const Mood m : {Mood::A, Mood::E, Mood::I, Mood::O}) CHECK(bank[0].plausible_for(m));
    CHECK_FALSE(bank[1].plausible_for(Mood::A));
    CHECK(bank[1].plausible_for(Mood::E));
    CHECK(bank[1].language == "de");

    std::ofstream(dir / "both.jsonl") << R"({"terms": ["a", "b", "c"], "plausible_conclusion": true, "plausible": {}})"
                                      << "\n";
    CHECK_THROWS_AS(read_term_bank(dir / "both.jsonl"), ValidationError);
    std::ofstream(dir / "two.jsonl") << R"({"terms": ["a", "b"], "plausible_conclusion": true})" << "\n";
    CHECK_THROWS_AS(read_term_bank(dir / "two.jsonl"), ValidationError);
    std::ofstream(dir / "nolang.jsonl") << R"({"terms": ["a", "b", "c"], "plausible_conclusion": true})" << "\n";
    CHECK_THROWS_AS(read_term_bank(dir / "nolang.jsonl"), ValidationError);
    CHECK_THROWS_AS(read_term_bank(dir / "absent.jsonl"), IoError);
  }

  TEST_CASE("shipped templates and term bank load") {
    const auto t = Templates::load(std::filesystem::path(ABSTEER_DATA_DIR) / "templates" / "en.json");
    CHECK(t.patterns.size() == 4);
    const auto bank = read_term_bank(std::filesystem::path(ABSTEER_DATA_DIR) / "terms" / "en.jsonl");
    CHECK(bank.size() == 12);
  }
}
