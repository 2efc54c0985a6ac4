#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "rcl/consensus.hpp"

using namespace rcl;

namespace {

PseudoLabelMatrix matrix(const std::vector<std::vector<int>>& rows, std::size_t classes = 10) {
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < rows.size(); ++i) ids.push_back("s" + std::to_string(i));
  PseudoLabelMatrix pl(ids, rows.front().size(), classes);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t m = 0; m < rows[i].size(); ++m) pl.at(i, m) = rows[i][m];
  return pl;
}

std::vector<int> random_row(std::mt19937_64& rng, std::size_t m, int classes) {
  std::uniform_int_distribution<int> c(0, classes - 1);
  std::vector<int> row(m);
  for (auto& v : row) v = c(rng);
  return row;
}

}  // namespace

TEST(Reliability, Examples) {
  EXPECT_EQ(reliability(std::vector<int>{4, 4, 4}), 1.0);
  EXPECT_DOUBLE_EQ(reliability(std::vector<int>{4, 4, 7}), 1.0 / 3.0);
  EXPECT_EQ(reliability(std::vector<int>{1, 2, 3}), 0.0);
  EXPECT_DOUBLE_EQ(reliability(std::vector<int>{1, 1, 2, 2}), 1.0 / 3.0);
  EXPECT_EQ(agreement_count(std::vector<int>{4, 4, 7}), 2);
  EXPECT_EQ(agreement_count(std::vector<int>{1, 1, 2, 2}), 4);
}

TEST(Reliability, Errors) {
  try {
    reliability(std::vector<int>{3});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Config);
  }
  try {
    reliability(std::vector<int>{3, -1, 3});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidRow);
  }
}

TEST(Reliability, MatchesPairEnumerationAndIsPermutationInvariant) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<std::size_t> teachers(2, 6);
  std::uniform_int_distribution<int> classes(2, 12);
  for (int trial = 0; trial < 10000; ++trial) {
    auto row = random_row(rng, teachers(rng), classes(rng));
    const auto k = agreement_count(row);
    ASSERT_EQ(k, oracle::agreements(row));
    std::shuffle(row.begin(), row.end(), rng);
    ASSERT_EQ(agreement_count(row), k);
    // Class relabeling by a bijection (here: reflect the index range) keeps the count.
    for (auto& v : row) v = 100 - v;
    ASSERT_EQ(agreement_count(row), k);
  }
}

TEST(Partition, Examples) {
  const auto p = partition(matrix({{4, 4, 4}, {4, 4, 7}, {1, 2, 3}}));
  ASSERT_EQ(p.size(), 3u);
  EXPECT_EQ(p.tags[0], Tag::R);
  EXPECT_EQ(p.tags[1], Tag::LR);
  EXPECT_EQ(p.tags[2], Tag::UR);
  EXPECT_EQ(p.scores[0], 1.0);
  EXPECT_NEAR(p.scores[1], 0.3333, 1e-4);
  EXPECT_EQ(p.scores[2], 0.0);
}

TEST(Partition, UnanimousAndTwoTeacherCases) {
  const auto all = partition(matrix({{2, 2}, {5, 5}, {0, 0}}));
  EXPECT_EQ(all.count(Tag::R), 3u);
  EXPECT_EQ(all.count(Tag::LR) + all.count(Tag::UR), 0u);

  std::mt19937_64 rng(2);
  std::vector<std::vector<int>> rows;
  for (int i = 0; i < 500; ++i) rows.push_back(random_row(rng, 2, 3));
  const auto two = partition(matrix(rows, 3));
  EXPECT_EQ(two.count(Tag::LR), 0u);
  EXPECT_EQ(two.count(Tag::R) + two.count(Tag::UR), rows.size());
}

TEST(Partition, TagsFollowUnanimityAndDistinctness) {
  std::mt19937_64 rng(23);
  std::vector<std::vector<int>> rows;
  for (int i = 0; i < 2000; ++i) rows.push_back(random_row(rng, 4, 5));
  const auto p = partition(matrix(rows, 5));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto d = oracle::distinct(rows[i]);
    EXPECT_EQ(p.tags[i] == Tag::R, d == 1);
    EXPECT_EQ(p.tags[i] == Tag::UR, d == rows[i].size());
  }
  EXPECT_EQ(p.count(Tag::R) + p.count(Tag::LR) + p.count(Tag::UR), rows.size());
}

TEST(Partition, RowsWithUnlabeledEntriesAreRejectedOrFiltered) {
  auto pl = matrix({{1, 1, 1}, {2, -1, 2}, {0, 1, 2}});
  EXPECT_THROW(partition(pl), Error);
  const auto filtered = filter_complete_rows(pl);
  ASSERT_EQ(filtered.excluded.size(), 1u);
  EXPECT_EQ(filtered.excluded[0], "s1");
  const auto p = partition(filtered.matrix);
  EXPECT_EQ(p.size(), 2u);
  EXPECT_EQ(filtered.matrix.sample_id(1), "s2");
}

TEST(ModeLabel, Examples) {
  Rng rng(1);
  EXPECT_EQ(mode_label(std::vector<int>{4, 4, 7}, rng), 4);
  EXPECT_EQ(mode_label(std::vector<int>{5}, rng), 5);
  EXPECT_EQ(mode_label(std::vector<int>{3, 7, 7, 3}, rng, TiePolicy::LowestIndex), 3);
  EXPECT_THROW(mode_label(std::vector<int>{}, rng), Error);
}

TEST(ModeLabel, SeededTieBreakIsReproducibleAndUsesBothOptions) {
  const std::vector<int> row{3, 7, 7, 3};
  std::set<int> seen;
  for (std::uint64_t seed = 0; seed < 64; ++seed) {
    Rng a = mode_rng(seed, 9), b = mode_rng(seed, 9);
    const int x = mode_label(row, a);
    EXPECT_EQ(x, mode_label(row, b));
    EXPECT_TRUE(x == 3 || x == 7);
    seen.insert(x);
  }
  EXPECT_EQ(seen.size(), 2u);
}

TEST(ModeLabel, AlwaysMaximalFrequency) {
  std::mt19937_64 gen(31);
  Rng rng(4);
  for (int trial = 0; trial < 5000; ++trial) {
    const auto row = random_row(gen, 1 + trial % 6, 4);
    const auto counts = oracle::counts(row);
    int best = 0;
    for (auto [c, n] : counts) best = std::max(best, n);
    EXPECT_EQ(counts.at(mode_label(row, rng)), best);
  }
}

TEST(MultiHotMask, Examples) {
  const auto a = multi_hot_mask(std::vector<int>{2, 5, 5}, 8);
  EXPECT_EQ(a, (std::vector<std::uint8_t>{0, 0, 1, 0, 0, 1, 0, 0}));
  EXPECT_EQ(multi_hot_mask(std::vector<int>{3, 3, 3}, 4), (std::vector<std::uint8_t>{0, 0, 0, 1}));
  EXPECT_EQ(multi_hot_mask(std::vector<int>{0, 1, 2}, 3), (std::vector<std::uint8_t>{1, 1, 1}));
  try {
    multi_hot_mask(std::vector<int>{0, 4}, 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Bounds);
  }
}

TEST(MultiHotMask, EqualsUnionAndPopcountIsDistinctCount) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 5000; ++trial) {
    const auto row = random_row(rng, 2 + trial % 5, 9);
    const auto mask = multi_hot_mask(row, 9);
    EXPECT_EQ(mask, oracle::union_mask(row, 9));
    EXPECT_EQ(static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1)), oracle::distinct(row));
  }
}

TEST(PseudoLabelCsv, RoundTripAndErrors) {
  const auto pl = matrix({{1, 2, -1}, {0, 0, 0}});
  std::ostringstream out;
  write_pseudo_labels(out, pl);
  EXPECT_EQ(out.str(), "sample_id,teacher_0,teacher_1,teacher_2\ns0,1,2,-1\ns1,0,0,0\n");
  std::istringstream in(out.str());
  const auto back = read_pseudo_labels(in, 10);
  EXPECT_EQ(back.rows(), 2u);
  EXPECT_EQ(back.at(0, 2), -1);
  EXPECT_EQ(back.at(1, 1), 0);

  std::istringstream bad_header("id,teacher_0\n");
  EXPECT_THROW(read_pseudo_labels(bad_header), Error);
  std::istringstream range("sample_id,teacher_0,teacher_1\na,1,12\n");
  EXPECT_THROW(read_pseudo_labels(range, 10), Error);
  std::istringstream ragged("sample_id,teacher_0,teacher_1\na,1\n");
  EXPECT_THROW(read_pseudo_labels(ragged), Error);
}

TEST(PartitionCsv, Format) {
  const auto pl = matrix({{4, 4, 4}, {4, 4, 7}, {1, 2, 3}});
  std::ostringstream out;
  write_partition(out, pl, partition(pl));
  EXPECT_EQ(out.str(), "sample_id,score,tag\ns0,1.000000,R\ns1,0.333333,LR\ns2,0.000000,UR\n");
}
