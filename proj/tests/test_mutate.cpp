#include <gtest/gtest.h>

#include <random>
#include <regex>

#include "racg/errors.hpp"
#include "racg/lexer.hpp"
#include "racg/mutate.hpp"
#include "support.hpp"

using namespace racg;
using namespace racg::testing;

namespace {

CodeDocument doc(Language lang, std::string code, std::string id = "d") {
  return {std::move(id), lang, std::move(code), std::nullopt, "f"};
}

constexpr MutationType kAll[] = {MutationType::LogicalKeyword, MutationType::ControlFlow,
                                 MutationType::Syntax, MutationType::Lexicon};

}  // namespace

TEST(Prng, SplitmixReferenceValues) {
  // splitmix64 finalizer applied to 0 and 1 (reference implementation).
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  EXPECT_EQ(splitmix64(0), mix(0));
  EXPECT_EQ(splitmix64(12345), mix(12345));
  EXPECT_EQ(document_seed(42, "abc"), splitmix64(42 ^ fnv1a64("abc")));
}

TEST(Prng, UniformStaysInRangeAndCoversIt) {
  SitePrng prng(document_seed(42, "doc"));
  std::vector<int> hist(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const auto v = prng.uniform(7);
    ASSERT_LT(v, 7u);
    ++hist[v];
  }
  for (int h : hist) EXPECT_GT(h, 800);
}

TEST(Mutate, LogicTableIsAnInvolutionOnPairs) {
  for (std::string_view t : {"and", "or", "&&", "||", "==", "!=", "===", "!==", "<", ">=", ">", "<="}) {
    const auto once = invert_logic_token(t);
    ASSERT_TRUE(once) << t;
    EXPECT_EQ(invert_logic_token(*once), t);
  }
  EXPECT_EQ(invert_logic_token("!"), "");
  EXPECT_EQ(invert_logic_token("not"), "");
  EXPECT_FALSE(invert_logic_token("+"));
}

TEST(Mutate, NamesParse) {
  EXPECT_EQ(mutation_from_string("logical"), MutationType::LogicalKeyword);
  EXPECT_EQ(mutation_from_string("controlflow"), MutationType::ControlFlow);
  EXPECT_EQ(mutation_from_string("syntax"), MutationType::Syntax);
  EXPECT_EQ(mutation_from_string("lexicon"), MutationType::Lexicon);
  EXPECT_THROW(mutation_from_string("chaos"), std::invalid_argument);
  for (auto m : kAll) EXPECT_EQ(mutation_from_string(to_string(m)), m);
}

TEST(Mutate, LogicSitesSkipStringsCommentsAndGenerics) {
  const std::string java =
      "List<Integer> xs = new ArrayList<>(); // a < b\nString s = \"x && y\";\nif (a < b && !c) {}\n";
  const auto sites = find_sites(java, Language::Java, MutationType::LogicalKeyword);
  std::vector<std::string> texts;
  for (const auto& s : sites) texts.push_back(s.token_text);
  EXPECT_EQ(texts, (std::vector<std::string>{"<", "&&", "!"}));
  for (const auto& s : sites) EXPECT_EQ(java.substr(s.start, s.end - s.start), s.token_text);
}

TEST(Mutate, PostfixBangAndOperatorOverloadsAreNotSites) {
  const auto ts = find_sites("let n = x!.length;\n", Language::TypeScript, MutationType::LogicalKeyword);
  EXPECT_TRUE(ts.empty());
  const auto cpp = find_sites("bool operator==(A a, A b);\n", Language::Cpp, MutationType::LogicalKeyword);
  EXPECT_TRUE(cpp.empty());
}

TEST(Mutate, LogicalFlipOnPython) {
  const auto rec = apply_mutation(doc(Language::Python, "def f(x):\n    return x > 3\n"),
                                  MutationType::LogicalKeyword);
  EXPECT_TRUE(rec.applied);
  EXPECT_EQ(rec.mutated, "def f(x):\n    return x <= 3\n");
  EXPECT_EQ(rec.replacement, "<=");
}

TEST(Mutate, ControlFlowPrefersElseIf) {
  const std::string py =
      "def f(x):\n    if x < 0:\n        return -1\n    elif x == 0:\n        return 0\n    else:\n"
      "        return 1\n";
  const auto sites = find_sites(py, Language::Python, MutationType::ControlFlow);
  ASSERT_EQ(sites.size(), 2u);
  EXPECT_EQ(sites[0].token_text.rfind("    elif", 0), 0u);
  const auto rec = apply_mutation(doc(Language::Python, py), MutationType::ControlFlow);
  EXPECT_EQ(rec.mutated,
            "def f(x):\n    if x < 0:\n        return -1\n    else:\n        return 1\n");
}

TEST(Mutate, ControlFlowContinueReplacements) {
  const auto py = apply_mutation(
      doc(Language::Python, "for x in xs:\n    if x:\n        continue\n    y(x)\n"), MutationType::ControlFlow);
  EXPECT_EQ(py.mutated, "for x in xs:\n    if x:\n        pass\n    y(x)\n");
  const auto java = apply_mutation(
      doc(Language::Java, "for (int x : xs) {\n  if (x > 0) {\n    continue;\n  }\n  f(x);\n}\n"),
      MutationType::ControlFlow);
  EXPECT_TRUE(java.applied);
  EXPECT_EQ(java.mutated.find("continue"), std::string::npos);
  const auto rb = apply_mutation(doc(Language::Ruby, "xs.each do |x|\n  next if x\n  p x\nend\n"),
                                 MutationType::ControlFlow);
  EXPECT_NE(rb.mutated.find("nil if x"), std::string::npos);
}

TEST(Mutate, ControlFlowBraceElseIf) {
  const std::string java =
      "int f(int x) {\n  if (x < 0) {\n    return -1;\n  } else if (x == 0) {\n    return 0;\n  } else {\n"
      "    return 1;\n  }\n}\n";
  const auto rec = apply_mutation(doc(Language::Java, java), MutationType::ControlFlow);
  EXPECT_EQ(rec.mutated,
            "int f(int x) {\n  if (x < 0) {\n    return -1;\n  } else {\n    return 1;\n  }\n}\n");
  const std::string go = "if x < 0 {\n\treturn 1\n} else if x == 0 {\n\treturn 2\n}\nreturn 3\n";
  EXPECT_EQ(apply_mutation(doc(Language::Go, go), MutationType::ControlFlow).mutated,
            "if x < 0 {\n\treturn 1\n}\nreturn 3\n");
}

TEST(Mutate, NoSiteMeansUnchanged) {
  const auto rec = apply_mutation(doc(Language::Python, "x = 1\n"), MutationType::ControlFlow);
  EXPECT_FALSE(rec.applied);
  EXPECT_FALSE(rec.site);
  EXPECT_EQ(rec.mutated, rec.original);
}

TEST(Mutate, SyntaxUppercasesOneIdentifierCharacter) {
  const CodeDocument d = doc(Language::Python, "def total(xs):\n    return sum(xs)\n");
  const auto rec = apply_mutation(d, MutationType::Syntax);
  ASSERT_TRUE(rec.applied);
  ASSERT_EQ(rec.mutated.size(), d.code.size());
  std::size_t diffs = 0;
  for (std::size_t i = 0; i < d.code.size(); ++i) {
    if (d.code[i] != rec.mutated[i]) {
      ++diffs;
      EXPECT_TRUE(std::islower(static_cast<unsigned char>(d.code[i])));
      EXPECT_EQ(rec.mutated[i], std::toupper(static_cast<unsigned char>(d.code[i])));
    }
  }
  EXPECT_EQ(diffs, 1u);
}

TEST(Mutate, LexiconRenamesEveryOccurrence) {
  const std::string code = "def area(w, h):\n    return w * h\n";
  // Walk seeds until an identifier rename is drawn.
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto rec = apply_mutation(doc(Language::Python, code), MutationType::Lexicon, seed);
    ASSERT_TRUE(rec.applied);
    if (rec.site->kind != SiteKind::Identifier) continue;
    EXPECT_TRUE(std::regex_match(rec.replacement, std::regex("[a-z][a-z0-9]{7}")));
    const std::string old = rec.site->token_text;
    EXPECT_EQ(rec.mutated.find(old + "("), std::string::npos);
    std::size_t count = 0;
    for (std::size_t p = rec.mutated.find(rec.replacement); p != std::string::npos;
         p = rec.mutated.find(rec.replacement, p + 1)) {
      ++count;
    }
    std::size_t before = 0;
    for (const auto& t : lex(code, Language::Python).tokens) {
      if (t.kind == TokenKind::Identifier && t.text(code) == old) ++before;
    }
    EXPECT_EQ(count, before);
    return;
  }
  FAIL() << "no identifier rename in 200 seeds";
}

TEST(Mutate, LexiconStringReplacementKeepsLength) {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    const auto rec =
        apply_mutation(doc(Language::Java, "String s = \"hello\";\n"), MutationType::Lexicon, seed);
    if (!rec.site || rec.site->kind != SiteKind::StringConstant) continue;
    EXPECT_EQ(rec.replacement.size(), 5u);
    EXPECT_NE(rec.replacement, "hello");
    for (char c : rec.replacement) EXPECT_TRUE(std::isalnum(static_cast<unsigned char>(c)));
    return;
  }
  FAIL() << "no string replacement in 300 seeds";
}

// Property: for random documents from the fixture and random seeds, every
// applied mutation changes exactly the recorded site and nothing else.
TEST(MutateProperty, SingleSiteEdits) {
  const Corpus c = fixture_corpus();
  std::mt19937_64 rng(2024);
  const auto& docs = c.documents();
  for (int trial = 0; trial < 400; ++trial) {
    const CodeDocument& d = docs[rng() % docs.size()];
    const MutationType m = kAll[rng() % 4];
    const std::uint64_t seed = rng();
    const auto rec = apply_mutation(d, m, seed);
    EXPECT_EQ(rec.original, d.code);
    if (!rec.applied) {
      EXPECT_EQ(rec.mutated, d.code);
      continue;
    }
    ASSERT_TRUE(rec.site);
    EXPECT_EQ(d.code.substr(rec.site->start, rec.site->end - rec.site->start), rec.site->token_text);
    if (m == MutationType::Lexicon && rec.site->kind == SiteKind::Identifier) continue;
    const std::string expect = d.code.substr(0, rec.site->start) + rec.replacement +
                               d.code.substr(rec.site->end);
    if (m == MutationType::ControlFlow) {
      // Clause removal may also drop the clause's now-empty line.
      EXPECT_NE(rec.mutated, d.code);
      continue;
    }
    EXPECT_EQ(rec.mutated, expect) << d.doc_id << " " << to_string(m);
  }
}

TEST(MutateProperty, DeterministicAndBatchIndependent) {
  const Corpus c = fixture_corpus();
  std::vector<CodeDocument> docs(c.documents().begin(), c.documents().begin() + 40);
  for (auto m : kAll) {
    const auto a = perturb_retrieved(docs, m, 42);
    const auto b = perturb_retrieved(docs, m, 42);
    EXPECT_EQ(a.records, b.records);
    // Reversed batch: each document's mutation is unaffected.
    std::vector<CodeDocument> rev(docs.rbegin(), docs.rend());
    const auto r = perturb_retrieved(rev, m, 42);
    for (std::size_t i = 0; i < docs.size(); ++i) {
      EXPECT_EQ(r.records[docs.size() - 1 - i], a.records[i]);
      EXPECT_EQ(a.documents[i].code, a.records[i].mutated);
    }
  }
}

TEST(MutateProperty, SeedsChangeChoices) {
  const CodeDocument d = fixture_corpus().documents().front();
  std::set<std::string> outputs;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    outputs.insert(apply_mutation(d, MutationType::Syntax, seed).mutated);
  }
  EXPECT_GT(outputs.size(), 3u);
}

TEST(MutateProperty, LogicSitesNeverInsideStringsOrComments) {
  const Corpus c = fixture_corpus();
  for (const auto& d : c.documents()) {
    const std::string text = c.document_text(d);
    const auto toks = lex(text, d.language).tokens;
    for (auto m : {MutationType::LogicalKeyword, MutationType::ControlFlow}) {
      for (const auto& s : find_sites(text, d.language, m)) {
        for (const auto& t : toks) {
          if (t.is_comment() || t.kind == TokenKind::String || t.kind == TokenKind::Char) {
            EXPECT_FALSE(s.start >= t.begin && s.start < t.end) << d.doc_id;
          }
        }
      }
    }
  }
}

TEST(Applicability, FixtureStructure) {
  const Corpus c = fixture_corpus();
  for (Language lang : {Language::Python, Language::Java}) {
    const Language one[] = {lang};
    const double syn = applicability_rate(c, one, MutationType::Syntax);
    const double lex_rate = applicability_rate(c, one, MutationType::Lexicon);
    const double cf = applicability_rate(c, one, MutationType::ControlFlow);
    const double lk = applicability_rate(c, one, MutationType::LogicalKeyword);
    EXPECT_EQ(syn, 1.0);
    EXPECT_EQ(lex_rate, 1.0);
    EXPECT_LE(cf, lk);
    EXPECT_LE(lk, 1.0);
    EXPECT_GT(cf, 0.0);
  }
  const Language none[] = {Language::Swift};
  EXPECT_THROW(applicability_rate(c, none, MutationType::Syntax), EmptySelection);
}

TEST(Applicability, EveryLanguageHasSites) {
  const std::map<Language, std::string> samples = {
      {Language::Cpp, "int f(int a) { if (a > 1 && a < 9) { return 1; } else if (a == 0) { return 2; } return 0; }\n"},
      {Language::CSharp, "int F(int a) { if (a > 1 || a == 3) { return 1; } else { return 0; } }\n"},
      {Language::Go, "func f(a int) int {\n\tif a > 1 && a < 9 {\n\t\treturn 1\n\t} else {\n\t\treturn 0\n\t}\n}\n"},
      {Language::Java, "int f(int a) { if (a > 1) { return 1; } else { return 0; } }\n"},
      {Language::JavaScript, "function f(a) { if (a === 1 || a > 5) { return 1; } else { return 0; } }\n"},
      {Language::Kotlin, "fun f(a: Int): Int { if (a > 1 && a < 9) { return 1 } else { return 0 } }\n"},
      {Language::Perl, "sub f { my $a = shift; if ($a > 1 && $a < 9) { return 1; } else { return 0; } }\n"},
      {Language::Php, "<?php\nfunction f($a) { if ($a > 1 && $a < 9) { return 1; } else { return 0; } }\n"},
      {Language::Python, "def f(a):\n    if a > 1 and a < 9:\n        return 1\n    else:\n        return 0\n"},
      {Language::Ruby, "def f(a)\n  if a > 1 && a < 9\n    1\n  else\n    0\n  end\nend\n"},
      {Language::Scala, "def f(a: Int): Int = { if (a > 1 && a < 9) { 1 } else { 0 } }\n"},
      {Language::Swift, "func f(a: Int) -> Int {\n  if a > 1 && a < 9 {\n    return 1\n  } else {\n    return 0\n  }\n}\n"},
      {Language::TypeScript, "function f(a: number): number { if (a > 1 && a < 9) { return 1; } else { return 0; } }\n"},
  };
  for (const auto& [lang, code] : samples) {
    for (auto m : kAll) {
      EXPECT_FALSE(find_sites(code, lang, m).empty()) << to_string(lang) << " " << to_string(m);
    }
  }
}
