// Copyright 2026 The Connections Workbench Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "test_support.hpp"

using namespace connections;

namespace {

EmbeddingVector vec(std::initializer_list<double> v) { return EmbeddingVector(std::vector<double>(v)); }

std::vector<double> basis(std::size_t dim, std::size_t i) {
  std::vector<double> v(dim, 0.0);
  v[i] = 1.0;
  return v;
}

Puzzle small_puzzle() {
  Puzzle p;
  const char* names[4] = {"A", "B", "C", "D"};
  for (int c = 0; c < 4; ++c) {
    Category cat{names[c], {}};
    for (int w = 0; w < 4; ++w) cat.words.emplace_back(std::string(1, char('a' + c)) + std::to_string(w));
    p.categories.push_back(cat);
  }
  return p;
}

TaggedMetrics tagged(PuzzleProvenance prov, double cohesion, double ambiguity) {
  TaggedMetrics t;
  t.provenance = std::move(prov);
  t.metrics.cohesion = cohesion;
  t.metrics.ambiguity = ambiguity;
  return t;
}

}  // namespace

TEST(CosineTest, Examples) {
  EXPECT_DOUBLE_EQ(cosine(vec({1, 0}), vec({1, 0})), 1.0);
  EXPECT_DOUBLE_EQ(cosine(vec({1, 0}), vec({0, 1})), 0.0);
  EXPECT_DOUBLE_EQ(cosine(vec({1, 0}), vec({-1, 0})), -1.0);
  EXPECT_NEAR(cosine(vec({1, 1}), vec({1, 0})), 1.0 / std::sqrt(2.0), 1e-15);
}

TEST(CosineTest, Errors) {
  try {
    cosine(vec({1, 0}), vec({1, 0, 0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
  EXPECT_THROW(vec({0, 0}), Error);
}

TEST(CosineTest, Properties) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> d(0, 1);
  std::uniform_real_distribution<double> scale(1e-3, 1e3);
  for (int i = 0; i < 2000; ++i) {
    std::vector<double> a(8), b(8);
    for (auto& x : a) x = d(rng);
    for (auto& x : b) x = d(rng);
    EmbeddingVector u(a), v(b);
    double c = cosine(u, v);
    EXPECT_LE(c, 1.0);
    EXPECT_GE(c, -1.0);
    EXPECT_EQ(c, cosine(v, u));
    EXPECT_NEAR(cosine(u, u), 1.0, 1e-12);
    double s = scale(rng);
    auto scaled = a;
    for (auto& x : scaled) x *= s;
    EXPECT_NEAR(cosine(EmbeddingVector(scaled), v), c, 1e-12);
    EXPECT_NEAR(c, testsupport::oracle_cosine(a, b), 1e-12);
  }
}

TEST(CohesionTest, TwoPairsGiveOneThird) {
  std::vector<EmbeddingVector> vs{vec({1, 0}), vec({1, 0}), vec({0, 1}), vec({0, 1})};
  EXPECT_NEAR(category_cohesion(vs), 1.0 / 3.0, 1e-15);
}

TEST(CohesionTest, RequiresFourVectors) {
  std::vector<EmbeddingVector> vs{vec({1, 0}), vec({1, 0}), vec({0, 1})};
  EXPECT_THROW(category_cohesion(vs), Error);
}

TEST(PuzzleMetricsTest, OrthogonalCategories) {
  auto p = small_puzzle();
  EmbeddingMap emb;
  for (std::size_t c = 0; c < 4; ++c)
    for (const auto& w : p.categories[c].words) emb.emplace(w.key(), EmbeddingVector(basis(4, c)));
  auto m = compute_metrics(p, emb);
  EXPECT_EQ(m.category_cohesion, (std::vector<double>{1, 1, 1, 1}));
  EXPECT_DOUBLE_EQ(m.cohesion, 1.0);
  EXPECT_DOUBLE_EQ(m.ambiguity, 0.0);
  EXPECT_EQ(m.within_pairs, 24u);
  EXPECT_EQ(m.across_pairs, 96u);
}

TEST(PuzzleMetricsTest, AllWordsIdentical) {
  auto p = small_puzzle();
  EmbeddingMap emb;
  for (const auto& k : all_keys(p)) emb.emplace(k, vec({0.3, 0.4}));
  auto m = compute_metrics(p, emb);
  EXPECT_NEAR(m.cohesion, 1.0, 1e-15);
  EXPECT_NEAR(m.ambiguity, 1.0, 1e-15);
}

TEST(PuzzleMetricsTest, MixedCategoryCohesion) {
  // One category with two words on e0 and two on e1, the rest on their own axes.
  auto p = small_puzzle();
  EmbeddingMap emb;
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t w = 0; w < 4; ++w) {
      auto axis = c == 0 ? (w < 2 ? 4 : 5) : c;
      emb.emplace(p.categories[c].words[w].key(), EmbeddingVector(basis(6, axis)));
    }
  auto m = compute_metrics(p, emb);
  EXPECT_NEAR(m.category_cohesion[0], 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(m.cohesion, (1.0 / 3.0 + 3.0) / 4.0, 1e-15);
  EXPECT_DOUBLE_EQ(m.ambiguity, 0.0);
}

TEST(PuzzleMetricsTest, MatchesOracle) {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 50; ++i) {
    auto p = testsupport::random_puzzle(rng);
    auto emb = testsupport::test_embeddings(p, 7, 8);
    auto m = compute_metrics(p, emb);
    auto o = testsupport::brute_force(p, emb);
    ASSERT_EQ(m.category_cohesion.size(), o.per_category.size());
    for (std::size_t c = 0; c < 4; ++c) EXPECT_NEAR(m.category_cohesion[c], o.per_category[c], 1e-9);
    EXPECT_NEAR(m.cohesion, o.cohesion, 1e-9);
    EXPECT_NEAR(m.ambiguity, o.ambiguity, 1e-9);
    EXPECT_EQ(m.within_pairs, std::size_t(o.within_pairs));
    EXPECT_EQ(m.across_pairs, std::size_t(o.across_pairs));
    EXPECT_EQ(m.within_pairs + m.across_pairs, 120u);
  }
}

TEST(PuzzleMetricsTest, PermutationInvariant) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 20; ++i) {
    auto p = testsupport::random_puzzle(rng);
    auto emb = testsupport::test_embeddings(p, 3, 16);
    auto base = compute_metrics(p, emb);
    auto q = p;
    std::shuffle(q.categories.begin(), q.categories.end(), rng);
    for (auto& c : q.categories) std::shuffle(c.words.begin(), c.words.end(), rng);
    auto m = compute_metrics(q, emb);
    EXPECT_NEAR(m.cohesion, base.cohesion, 1e-12);
    EXPECT_NEAR(m.ambiguity, base.ambiguity, 1e-12);
  }
}

TEST(PuzzleMetricsTest, RescaleInvariant) {
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> scale(0.01, 100.0);
  auto p = testsupport::random_puzzle(rng);
  auto emb = testsupport::test_embeddings(p, 3, 8);
  auto base = compute_metrics(p, emb);
  EmbeddingMap scaled;
  for (const auto& [k, v] : emb) {
    auto vals = v.values();
    double s = scale(rng);
    for (auto& x : vals) x *= s;
    scaled.emplace(k, EmbeddingVector(vals));
  }
  auto m = compute_metrics(p, scaled);
  EXPECT_NEAR(m.cohesion, base.cohesion, 1e-12);
  EXPECT_NEAR(m.ambiguity, base.ambiguity, 1e-12);
}

TEST(PuzzleMetricsTest, MissingEmbedding) {
  auto p = small_puzzle();
  auto emb = testsupport::test_embeddings(p, 7, 8);
  emb.erase("c2");
  try {
    compute_metrics(p, emb);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingEmbedding);
    EXPECT_EQ(e.subject(), "c2");
  }
}

TEST(PuzzleMetricsTest, RejectsInvalidPuzzle) {
  auto p = small_puzzle();
  p.categories.pop_back();
  auto emb = testsupport::test_embeddings(small_puzzle(), 7, 8);
  EXPECT_THROW(compute_metrics(p, emb), Error);
}

TEST(PuzzleMetricsTest, FixturesAreFinite) {
  for (const auto& p : testsupport::zero_shot_fixture()) {
    auto m = compute_metrics(p, testsupport::test_embeddings(p, 7, 8));
    EXPECT_TRUE(std::isfinite(m.cohesion));
    EXPECT_TRUE(std::isfinite(m.ambiguity));
  }
}

TEST(CorpusReportTest, MeanOfTwo) {
  auto role = PuzzleProvenance::model(PromptKind::RoleInjected, "GPT-4o");
  std::vector<TaggedMetrics> t{tagged(role, 0.6, 0.1), tagged(role, 0.8, 0.3)};
  auto cm = corpus_report(t);
  ASSERT_EQ(cm.rows.size(), 1u);
  EXPECT_NEAR(cm.rows[0].avg_cohesion, 0.7, 1e-12);
  EXPECT_NEAR(cm.rows[0].avg_ambiguity, 0.2, 1e-12);
  EXPECT_EQ(cm.rows[0].n, 2u);
  EXPECT_EQ(cm.rows[0].condition, Condition::RoleInjected);
}

TEST(CorpusReportTest, GroupsByModelAndCondition) {
  auto role = PuzzleProvenance::model(PromptKind::RoleInjected, "GPT-4o");
  auto zero = PuzzleProvenance::model(PromptKind::ZeroShot, "GPT-4o");
  std::vector<TaggedMetrics> t{tagged(PuzzleProvenance::human(), 0.5, 0.2), tagged(role, 0.4, 0.1),
                               tagged(zero, 0.3, 0.3), tagged(role, 0.6, 0.1)};
  auto cm = corpus_report(t);
  ASSERT_EQ(cm.rows.size(), 3u);
  EXPECT_EQ(cm.rows[0].model, "Official Games");
  EXPECT_EQ(cm.rows[0].condition, Condition::RealGame);
  EXPECT_EQ(cm.rows[1].condition, Condition::RoleInjected);
  EXPECT_EQ(cm.rows[1].n, 2u);
  EXPECT_NEAR(cm.rows[1].avg_cohesion, 0.5, 1e-12);
  EXPECT_EQ(cm.rows[2].condition, Condition::ZeroShot);
}

TEST(CorpusReportTest, SinglePuzzleRowEqualsItsMetrics) {
  std::vector<TaggedMetrics> t{tagged(PuzzleProvenance::human(), 0.123456789, 0.0987654321)};
  auto cm = corpus_report(t);
  EXPECT_EQ(cm.rows[0].avg_cohesion, 0.123456789);
  EXPECT_EQ(cm.rows[0].avg_ambiguity, 0.0987654321);
}

TEST(CorpusReportTest, EmptyCorpus) {
  try {
    corpus_report({});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyCorpus);
  }
}

TEST(CorpusReportTest, JsonRoundTrip) {
  auto role = PuzzleProvenance::model(PromptKind::RoleInjected, "GPT-4o");
  std::vector<TaggedMetrics> t{tagged(PuzzleProvenance::human(), 0.5, 0.2), tagged(role, 0.1 + 0.2, 0.7)};
  auto cm = corpus_report(t);
  auto back = corpus_from_json(nlohmann::json::parse(to_json(cm).dump()));
  ASSERT_EQ(back.rows.size(), cm.rows.size());
  for (std::size_t i = 0; i < cm.rows.size(); ++i) {
    EXPECT_EQ(back.rows[i].model, cm.rows[i].model);
    EXPECT_EQ(back.rows[i].condition, cm.rows[i].condition);
    EXPECT_EQ(back.rows[i].avg_cohesion, cm.rows[i].avg_cohesion);
    EXPECT_EQ(back.rows[i].avg_ambiguity, cm.rows[i].avg_ambiguity);
    EXPECT_EQ(back.rows[i].n, cm.rows[i].n);
  }
}

TEST(CorpusReportTest, TableAndCsvShape) {
  auto role = PuzzleProvenance::model(PromptKind::RoleInjected, "GPT-4o");
  auto zero = PuzzleProvenance::model(PromptKind::ZeroShot, "GPT-4o");
  std::vector<TaggedMetrics> t{tagged(PuzzleProvenance::human(), 0.5, 0.25), tagged(role, 0.4, 0.1),
                               tagged(zero, 0.3, 0.3)};
  auto cm = corpus_report(t);
  auto table = render_table(cm);
  std::istringstream in(table);
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_EQ(lines[0].rfind("Model", 0), 0u);
  EXPECT_NE(lines[1].find("Official Games"), std::string::npos);
  EXPECT_NE(lines[1].find("0.500"), std::string::npos);
  EXPECT_NE(lines[1].find("0.250"), std::string::npos);
  EXPECT_NE(lines[2].find("GPT-4o"), std::string::npos);
  EXPECT_EQ(lines[3].find("GPT-4o"), std::string::npos);  // repeated model left blank
  EXPECT_NE(lines[3].find("Zero"), std::string::npos);

  EXPECT_EQ(render_csv(cm),
            "model,prompt_type,avg_cohesion,avg_ambiguity,n\n"
            "Official Games,real_game,0.5,0.25,1\n"
            "GPT-4o,role_injected,0.4,0.1,1\n"
            "GPT-4o,zero_shot,0.3,0.3,1\n");
}
