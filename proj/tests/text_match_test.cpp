#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "rcl/data.hpp"
#include "rcl/labeling.hpp"
#include "rcl/text_match.hpp"

using namespace rcl;

namespace {

TextEmbedding vec(std::vector<double> v) {
  TextEmbedding e;
  e.vector = std::move(v);
  e.source = EmbeddingSource::Precomputed;
  return e;
}

std::size_t nonzeros(const TextEmbedding& e) {
  return static_cast<std::size_t>(std::count_if(e.vector.begin(), e.vector.end(), [](double x) { return x != 0.0; }));
}

PrecomputedEmbedder vehicle_table() { return PrecomputedEmbedder::load(RCL_FIXTURES "/vehicle_embeddings.tsv"); }

}  // namespace

TEST(Normalize, LowercasesStripsPunctuationCollapsesSpace) {
  EXPECT_EQ(normalize_text("  The  Object is an ALARM-clock. "), "the object is an alarm clock");
  EXPECT_EQ(normalize_text("Alarm_Clock"), "alarm clock");
  EXPECT_EQ(normalize_text("...!"), "");
}

TEST(NgramEmbedder, Deterministic) {
  NgramEmbedder e;
  EXPECT_EQ(e.embed("car").vector, e.embed("car").vector);
}

TEST(NgramEmbedder, SingleTrigramIsOneUnitBucket) {
  const auto v = NgramEmbedder().embed("abc");
  ASSERT_EQ(v.dim(), 4096u);
  EXPECT_EQ(nonzeros(v), 1u);
  EXPECT_EQ(v.vector[NgramEmbedder::bucket("abc")], 1.0);
}

TEST(NgramEmbedder, UnitNormForAnyTextWithTrigrams) {
  NgramEmbedder e;
  for (const char* t : {"alarm clock", "The object is an alarm clock.", "zzzzzz", "a b c d"}) {
    const auto v = e.embed(t);
    double sq = 0;
    for (double x : v.vector) sq += x * x;
    EXPECT_NEAR(std::sqrt(sq), 1.0, 1e-12) << t;
    EXPECT_FALSE(v.zero);
  }
}

TEST(NgramEmbedder, EmptyTextIsFlaggedZero) {
  const auto v = NgramEmbedder().embed(" ?! ");
  EXPECT_TRUE(v.zero);
  EXPECT_EQ(nonzeros(v), 0u);
}

TEST(NgramEmbedder, ShortTextHashesAsOneGram) {
  const auto v = NgramEmbedder().embed("TV");
  EXPECT_EQ(nonzeros(v), 1u);
  EXPECT_FALSE(v.zero);
  // The gram is the word-initial one, so the name is found inside a sentence.
  EXPECT_GT(sts(v, NgramEmbedder().embed("It is a TV.")), 0.0);
  EXPECT_EQ(v.vector[NgramEmbedder::bucket(" tv")], 1.0);
}

TEST(PrecomputedEmbedder, LoadsTable) {
  const auto t = vehicle_table();
  EXPECT_EQ(t.dim(), 5u);
  EXPECT_EQ(t.size(), 4u);
  EXPECT_EQ(t.embed("CAR").vector[0], 0.62);
}

TEST(PrecomputedEmbedder, MissingKeyIsLookupMiss) {
  std::istringstream in("car\t1 0\nbicycle\t0 1\n");
  const auto t = PrecomputedEmbedder::read(in);
  try {
    t.embed("Audi");
    FAIL() << "expected a lookup miss";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::LookupMiss);
    EXPECT_NE(std::string(e.what()).find("Audi"), std::string::npos);
  }
}

TEST(PrecomputedEmbedder, RejectsRaggedRows) {
  std::istringstream in("car\t1 0 0\nbicycle\t0 1\n");
  EXPECT_THROW(PrecomputedEmbedder::read(in), Error);
  std::istringstream no_tab("car 1 0\n");
  EXPECT_THROW(PrecomputedEmbedder::read(no_tab), Error);
}

TEST(Sts, IdentityOrthogonalityAndDiagonal) {
  const auto v = vec({0.3, -1.7, 2.2});
  EXPECT_EQ(sts(v, v), 1.0);
  EXPECT_EQ(sts(vec({1, 0}), vec({0, 1})), 0.0);
  EXPECT_NEAR(sts(vec({1 / std::sqrt(2.0), 1 / std::sqrt(2.0)}), vec({1, 0})), 0.7071, 1e-4);
  EXPECT_NEAR(sts(vec({1 / std::sqrt(2.0), 1 / std::sqrt(2.0)}), vec({1, 0})), std::sqrt(0.5), 1e-6);
}

TEST(Sts, Errors) {
  try {
    sts(vec({1, 0}), vec({1, 0, 0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Shape);
  }
  try {
    sts(vec({0, 0}), vec({1, 0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Undefined);
  }
}

TEST(Sts, SymmetricBoundedAndSelfExactOnRandomVectors) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0, 1);
  std::uniform_int_distribution<int> dim(1, 40);
  for (int trial = 0; trial < 2000; ++trial) {
    const int d = dim(rng);
    std::vector<double> a(d), b(d);
    for (auto& x : a) x = n(rng);
    for (auto& x : b) x = n(rng);
    const double ab = sts(vec(a), vec(b)), ba = sts(vec(b), vec(a));
    EXPECT_EQ(ab, ba);
    EXPECT_LE(ab, 1.0);
    EXPECT_GE(ab, -1.0);
    EXPECT_EQ(sts(vec(a), vec(a)), 1.0);
  }
}

TEST(AssignPseudoLabel, ExactNameMatch) {
  ClassVocab vocab({"bicycle", "alarm clock", "kettle"});
  NgramEmbedder e;
  LabelMatcher m(vocab, e);
  const auto a = m.assign("alarm clock");
  EXPECT_EQ(a.class_index, 1);
  EXPECT_EQ(a.similarity, 1.0);
  EXPECT_EQ(m.assign("  Alarm-Clock!").class_index, 1);
}

TEST(AssignPseudoLabel, SentenceMatchesOracleArgmax) {
  const std::vector<std::string> names{"alarm clock", "bicycle", "kettle"};
  const std::string text = "The object is an alarm clock.";
  // Unhashed trigram cosine must show a strict winner for the example to be meaningful.
  std::vector<double> sims;
  for (const auto& n : names) sims.push_back(oracle::trigram_cosine(text, n));
  const auto best = std::max_element(sims.begin(), sims.end()) - sims.begin();
  ASSERT_EQ(best, 0);
  for (std::size_t c = 1; c < sims.size(); ++c) ASSERT_LT(sims[c], sims[0]);

  ClassVocab vocab(names);
  NgramEmbedder e;
  EXPECT_EQ(assign_pseudo_label(text, vocab, e), 0);
}

TEST(AssignPseudoLabel, PrecomputedTableMapsBrandToCategory) {
  const auto table = vehicle_table();
  ClassVocab vocab({"car", "bicycle"});
  EXPECT_EQ(assign_pseudo_label("Audi", vocab, table), 0);
}

TEST(AssignPseudoLabel, UnembeddableTextIsUnlabeled) {
  ClassVocab vocab({"car", "bicycle"});
  NgramEmbedder ngram;
  try {
    assign_pseudo_label("", vocab, ngram);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Unlabeled);
  }
  const auto table = vehicle_table();
  try {
    assign_pseudo_label("a red tricycle", vocab, table);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Unlabeled);
  }
}

TEST(AssignPseudoLabel, TiesGoToLowestIndex) {
  // Two classes with identical embeddings: every query ties between them.
  const double s = 1 / std::sqrt(2.0);
  ClassVocab vocab({"first", "second", "third"}, std::vector<std::vector<double>>{{s, s}, {s, s}, {1, 0}});
  std::istringstream in("query\t1 1\n");
  const auto t = PrecomputedEmbedder::read(in);
  EXPECT_EQ(assign_pseudo_label("query", vocab, t), 0);
}

TEST(AssignPseudoLabel, InvariantToPositiveRescaling) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0, 1);
  std::uniform_real_distribution<double> scale(0.01, 100);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::vector<double>> cls(4, std::vector<double>(6));
    for (auto& v : cls) for (auto& x : v) x = n(rng);
    std::vector<double> q(6);
    for (auto& x : q) x = n(rng);
    auto argmax = [&](double k) {
      int best = 0;
      double bs = -2;
      for (int c = 0; c < 4; ++c) {
        std::vector<double> qs = q;
        for (auto& x : qs) x *= k;
        const double sim = sts(vec(qs), vec(cls[static_cast<std::size_t>(c)]));
        if (sim > bs) bs = sim, best = c;
      }
      return best;
    };
    EXPECT_EQ(argmax(1.0), argmax(scale(rng)));
  }
}

TEST(AssignPseudoLabel, VocabPermutationTracksNames) {
  std::vector<std::string> names(office_home_classes().begin(), office_home_classes().begin() + 12);
  std::vector<std::string> shuffled = names;
  std::mt19937_64 rng(3);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  NgramEmbedder e;
  ClassVocab a(names), b(shuffled);
  LabelMatcher ma(a, e), mb(b, e);
  for (const char* text : {"this looks like a backpack", "a bottle of water", "some batteries", "calculator on a desk"}) {
    EXPECT_EQ(a.name(static_cast<std::size_t>(ma.assign(text).class_index)), b.name(static_cast<std::size_t>(mb.assign(text).class_index)))
        << text;
  }
}

TEST(AssignPseudoLabel, VerbatimNamesMapToSelfWithoutShortcut) {
  // Bypass the exact-match shortcut by matching on embeddings directly.
  const auto& names = office_home_classes();
  NgramEmbedder e;
  std::vector<TextEmbedding> cls;
  for (const auto& n : names) cls.push_back(e.embed(n));
  for (std::size_t c = 0; c < names.size(); ++c) {
    const auto q = e.embed(names[c]);
    std::size_t best = 0;
    double bs = -2;
    for (std::size_t k = 0; k < cls.size(); ++k)
      if (const double s = sts(q, cls[k]); s > bs) bs = s, best = k;
    EXPECT_EQ(best, c) << names[c];
  }
}

TEST(ClassVocab, Invariants) {
  EXPECT_THROW(ClassVocab({"only"}), Error);
  EXPECT_THROW(ClassVocab({"Car", "car!"}), Error);
  EXPECT_THROW(ClassVocab({"a", "b"}, std::vector<std::vector<double>>{{1, 0}, {0.5, 0}}), Error);
  EXPECT_NO_THROW(ClassVocab({"a", "b"}, std::vector<std::vector<double>>{{1, 0}, {0, 1}}));
}

TEST(ClassVocab, ReadsOneNamePerLine) {
  std::istringstream in("car\nbicycle\nkettle\n");
  const auto v = read_vocab(in);
  EXPECT_EQ(v.size(), 3u);
  EXPECT_EQ(v.name(2), "kettle");
  std::istringstream gap("car\n\nkettle\n");
  EXPECT_THROW(read_vocab(gap), Error);
}

TEST(TeacherRecords, ParseAndRejectDuplicates) {
  std::istringstream in(R"({"sample_id": "a", "teacher": 0, "text": "car"}
{"sample_id": "a", "teacher": 1, "text": "bike"}

{"sample_id": "b", "teacher": 0, "text": ""}
)");
  const auto r = read_teacher_records(in);
  ASSERT_EQ(r.size(), 3u);
  EXPECT_EQ(r[1].teacher_id, 1);
  EXPECT_EQ(r[2].raw_text, "");

  std::istringstream dup(R"({"sample_id": "a", "teacher": 0, "text": "car"}
{"sample_id": "a", "teacher": 0, "text": "bike"}
)");
  EXPECT_THROW(read_teacher_records(dup), Error);
  std::istringstream bad(R"({"sample_id": "a", "teacher": "zero", "text": "car"})");
  EXPECT_THROW(read_teacher_records(bad), Error);
}

TEST(LabelRecords, DropPolicyLeavesUnlabeledCell) {
  ClassVocab vocab({"car", "bicycle"});
  NgramEmbedder e;
  LabelMatcher m(vocab, e);
  std::vector<TeacherRecord> recs{{"s0", 0, "car"}, {"s0", 1, "a bicycle"}, {"s1", 0, ""}, {"s1", 1, "Car."}};
  const auto r = label_records(recs, m, UnlabeledPolicy::Drop);
  EXPECT_EQ(r.matrix.rows(), 2u);
  EXPECT_EQ(r.matrix.at(0, 0), 0);
  EXPECT_EQ(r.matrix.at(0, 1), 1);
  EXPECT_EQ(r.matrix.at(1, 0), kUnlabeled);
  EXPECT_EQ(r.per_teacher[0].dropped, 1u);
  EXPECT_EQ(r.per_teacher[0].labeled, 1u);
  EXPECT_EQ(r.per_teacher[1].labeled, 2u);

  try {
    label_records(recs, m, UnlabeledPolicy::Error);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.kind(), ErrorKind::Unlabeled);
  }
}
