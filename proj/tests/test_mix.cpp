#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <map>
#include <chrono>

#include "capdistill/mix.hpp"
#include "support.hpp"

using namespace capdistill;
using testing_support::TempDir;

namespace {

MixSpec small_spec(std::uint64_t seed = 7) {
  MixSpec s;
  s.seed = seed;
  s.entries = {{"a", "", 5, 2}, {"b", "", 3, 1}, {"c", "", 4, 3}};
  return s;
}

// Counts every triple independently of verify_mix.
bool is_exact_permutation(const std::vector<MixEntryRef>& refs, const MixSpec& spec) {
  std::vector<std::tuple<std::uint32_t, std::uint32_t, std::uint64_t>> got, want;
  for (const auto& r : refs) got.emplace_back(r.dataset, r.copy, r.record_index);
  for (std::uint32_t d = 0; d < spec.entries.size(); ++d) {
    for (std::uint32_t c = 0; c < spec.entries[d].epochs; ++c) {
      for (std::uint64_t i = 0; i < spec.entries[d].count; ++i) want.emplace_back(d, c, i);
    }
  }
  std::sort(got.begin(), got.end());
  return got == want;
}

}  // namespace

TEST(Mix, TrainingTableTotals) {
  const auto pt = load_mix_spec(testing_support::fixture("mix_pretrain.json"));
  const auto ft = load_mix_spec(testing_support::fixture("mix_finetune.json"));
  EXPECT_EQ(pt.expected_total(), 1'042'000u);
  EXPECT_EQ(ft.expected_total(), 1'469'000u);
  const auto refs = compose_mix(pt);
  EXPECT_EQ(refs.size(), 1'042'000u);
  EXPECT_TRUE(verify_mix(refs, pt).pass);
}

TEST(Mix, IsExactPermutationOfCanonicalTriples) {
  for (std::uint64_t seed : {0ull, 1ull, 99ull}) {
    const auto spec = small_spec(seed);
    const auto refs = compose_mix(spec);
    EXPECT_EQ(refs.size(), 5u * 2 + 3 + 4 * 3);
    EXPECT_TRUE(is_exact_permutation(refs, spec));
  }
}

TEST(Mix, SameSeedSameOrderDifferentSeedDifferentOrder) {
  EXPECT_EQ(compose_mix(small_spec(3)), compose_mix(small_spec(3)));
  EXPECT_NE(compose_mix(small_spec(3)), compose_mix(small_spec(4)));
}

TEST(Mix, ShuffleSpreadsPositionsUniformly) {
  // Over many seeds, the ref that starts first should land in each
  // position about equally often.
  MixSpec s;
  s.entries = {{"a", "", 8, 1}};
  std::vector<int> hits(8, 0);
  const int trials = 8000;
  for (int t = 0; t < trials; ++t) {
    s.seed = static_cast<std::uint64_t>(t);
    const auto refs = compose_mix(s);
    for (std::size_t p = 0; p < refs.size(); ++p) {
      if (refs[p].record_index == 0) ++hits[p];
    }
  }
  for (int h : hits) EXPECT_NEAR(h, trials / 8, 150);
}

TEST(Mix, SpecValidation) {
  MixSpec s = small_spec();
  s.entries[1].epochs = 0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = small_spec();
  s.entries[1].count = 0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = small_spec();
  s.entries[2].dataset_id = "a";
  EXPECT_THROW(s.validate(), std::invalid_argument);
  EXPECT_THROW(stage_from_string("warmup"), std::invalid_argument);
}

TEST(Mix, MissingCountIsFilledFromFile) {
  TempDir dir;
  testing_support::spit(dir / "d.jsonl", "{\"id\":1}\n\n{\"id\":2}\n{\"id\":3}\n");
  const Json j = Json::parse(R"({"stage":"finetune","entries":[{"dataset_id":"d","path":"d.jsonl","epochs":2}]})");
  const auto spec = mix_spec_from_json(j, dir.path());
  EXPECT_EQ(spec.entries[0].count, 3u);
  EXPECT_EQ(spec.expected_total(), 6u);
}

TEST(MixVerify, DetectsMissingDuplicateAndOutOfRange) {
  const auto spec = small_spec();
  auto refs = compose_mix(spec);
  auto v = verify_mix(refs, spec);
  EXPECT_TRUE(v.pass);

  refs.back() = refs.front();
  v = verify_mix(refs, spec);
  EXPECT_FALSE(v.pass);
  EXPECT_EQ(v.duplicate_count, 1u);
  EXPECT_EQ(v.missing_count, 1u);

  refs = compose_mix(spec);
  refs.push_back({1, 3, 0});  // b has only 3 records
  v = verify_mix(refs, spec);
  EXPECT_FALSE(v.pass);
  EXPECT_EQ(v.out_of_range_count, 1u);
}

TEST(MixIo, WriteLoadRoundTripAndMaterialize) {
  TempDir dir;
  testing_support::spit(dir / "a.jsonl", "{\"n\":\"a0\"}\n{\"n\":\"a1\"}\n");
  testing_support::spit(dir / "b.jsonl", "{\"n\":\"b0\"}\n");
  MixSpec spec;
  spec.seed = 1;
  spec.entries = {{"a", dir / "a.jsonl", 2, 2}, {"b", dir / "b.jsonl", 1, 1}};
  const auto refs = compose_mix(spec);
  write_mix(refs, spec, dir / "mix.jsonl");
  EXPECT_EQ(load_mix(dir / "mix.jsonl", spec), refs);

  EXPECT_EQ(materialize_mix(refs, spec, dir / "out.jsonl"), 5u);
  const std::string out = testing_support::slurp(dir / "out.jsonl");
  std::string expected;
  for (const auto& r : refs) {
    expected += r.dataset == 1 ? "{\"n\":\"b0\"}\n" : (r.record_index == 0 ? "{\"n\":\"a0\"}\n" : "{\"n\":\"a1\"}\n");
  }
  EXPECT_EQ(out, expected);
}

TEST(MixIo, UnknownDatasetInMixFileIsRejected) {
  TempDir dir;
  testing_support::spit(dir / "mix.jsonl", "{\"dataset_id\":\"zzz\",\"record_index\":0,\"copy\":0}\n");
  try {
    load_mix(dir / "mix.jsonl", small_spec());
    FAIL();
  } catch (const CorpusError& e) {
    EXPECT_EQ(e.kind(), CorpusError::Kind::malformed_line);
    EXPECT_EQ(e.position(), 1u);
  }
}

TEST(Mix, EpochCopiesEachIndexOncePerCopy) {
  MixSpec s;
  s.entries = {{"d", "", 3, 2}};
  const auto refs = compose_mix(s);
  ASSERT_EQ(refs.size(), 6u);
  std::map<std::uint64_t, int> per_index;
  for (const auto& r : refs) ++per_index[r.record_index];
  for (std::uint64_t i = 0; i < 3; ++i) EXPECT_EQ(per_index[i], 2);
}

TEST(Mix, FirstPositionFrequencyOverManySeeds) {
  MixSpec s;
  s.entries = {{"a", "", 4, 1}};
  std::array<int, 4> first{};
  const int seeds = 10'000;
  for (int seed = 0; seed < seeds; ++seed) {
    s.seed = static_cast<std::uint64_t>(seed);
    ++first[compose_mix(s).front().record_index];
  }
  for (int f : first) EXPECT_NEAR(static_cast<double>(f) / seeds, 0.25, 0.02);
}
