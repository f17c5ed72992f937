// Copyright 2026 The memescope Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "memescope/checkpoint.h"
#include "memescope/error.h"
#include "memescope/gradcheck.h"
#include "memescope/model.h"
#include "memescope/synth.h"
#include "memescope/tokenizer.h"
#include "memescope/train.h"
#include "test_util.h"

namespace memescope {
namespace {

WordPieceVocab meme_vocab() {
  return WordPieceVocab::from_tokens({"dish", "##wash", "##er", "goat", "the", "a", "truck"});
}

std::vector<std::string> pieces(const TokenSequence& t, const WordPieceVocab& v) {
  std::vector<std::string> out;
  for (std::size_t id : t.ids) out.push_back(v.token(id));
  return out;
}

TEST(Tokenizer, DishwasherSplitsIntoThreePieces) {
  const WordPieceVocab v = meme_vocab();
  const TokenSequence t = tokenize("dishwasher", v, 7);
  EXPECT_EQ(pieces(t, v), (std::vector<std::string>{"[CLS]", "dish", "##wash", "##er", "[SEP]",
                                                     "[PAD]", "[PAD]"}));
  ASSERT_EQ(t.words.size(), 1u);
  EXPECT_EQ(t.words[0].begin, 1u);
  EXPECT_EQ(t.words[0].end, 4u);
  EXPECT_EQ(t.sep_position, 4u);
  EXPECT_EQ(t.pad_mask, (std::vector<bool>{false, false, false, false, false, true, true}));
}

TEST(Tokenizer, WholeWordAndUnknown) {
  const WordPieceVocab v = meme_vocab();
  EXPECT_EQ(pieces(tokenize("Goat", v, 4), v),
            (std::vector<std::string>{"[CLS]", "goat", "[SEP]", "[PAD]"}));
  EXPECT_EQ(pieces(tokenize("zebra", v, 3), v),
            (std::vector<std::string>{"[CLS]", "[UNK]", "[SEP]"}));
  // "dishx" cannot be fully covered, so the whole word is unknown.
  EXPECT_EQ(wordpiece("dishx", v), (std::vector<std::size_t>{WordPieceVocab::kUnk}));
}

TEST(Tokenizer, PunctuationAndTruncation) {
  EXPECT_EQ(pre_tokenize("Hi, THERE!"), (std::vector<std::string>{"hi", ",", "there", "!"}));
  const WordPieceVocab v = meme_vocab();
  const TokenSequence t = tokenize("the goat the truck a", v, 5);
  EXPECT_EQ(pieces(t, v), (std::vector<std::string>{"[CLS]", "the", "goat", "the", "[SEP]"}));
  EXPECT_THROW(tokenize("   ", v, 8), ValidationError);
  EXPECT_THROW(tokenize("goat", v, 2), ValidationError);
}

TEST(Vocab, SpecialsFixedAndNoDuplicates) {
  EXPECT_THROW(WordPieceVocab({"[CLS]", "[PAD]", "[SEP]", "[UNK]"}), ValidationError);
  EXPECT_THROW(WordPieceVocab({"[PAD]", "[CLS]", "[SEP]", "[UNK]", "a", "a"}), ValidationError);
  const WordPieceVocab v = meme_vocab();
  EXPECT_EQ(v.token(0), "[PAD]");
  EXPECT_EQ(v.token(3), "[UNK]");
  auto dir = testing::temp_dir("vocab");
  v.save(dir / "vocab.txt");
  EXPECT_EQ(WordPieceVocab::load(dir / "vocab.txt"), v);
}

using testing::Fixture;
using testing::make_fixture;

TEST(Model, ConfigValidation) {
  ModelConfig c;
  c.vocab_size = 10;
  c.hidden_dim = 30;
  c.num_heads = 4;
  EXPECT_THROW(c.validate(), ValidationError);
  c.hidden_dim = 32;
  c.max_text_len = 2;
  EXPECT_THROW(c.validate(), ValidationError);
  c.max_text_len = 3;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(ModelConfig::from_json(c.to_json()), c);
}

TEST(Model, PrepareInputPadsRegions) {
  const Fixture f = make_fixture();
  EXPECT_EQ(f.input.features.shape(), (std::vector<std::size_t>{6, 8}));
  EXPECT_EQ(f.input.region_pad, (std::vector<bool>{false, false, false, false, true, true}));
  for (std::size_t j = 0; j < 8; ++j) EXPECT_EQ(f.input.features.at(5, j), 0.0);
  EXPECT_EQ(f.input.boxes[5], (BoundingBox{0, 0, 0, 0}));
  MemeRecord too_many = f.record;
  too_many.regions.resize(7, too_many.regions[0]);
  EXPECT_THROW(prepare_input(f.config, f.vocab, too_many), ValidationError);
}

TEST(Model, ZeroFeaturesEmbedToBiasPlusSegmentB) {
  Fixture f = make_fixture();
  std::mt19937_64 rng(1);
  f.ckpt.params.at("visual.bias") = testing::random_tensor({f.config.hidden_dim}, rng);
  f.input.features.fill(0.0);
  Tape tape;
  BoundParameters p(tape, f.ckpt.params, false);
  EmbeddedInputs emb = embed_inputs(tape, p, f.config, f.input);
  EXPECT_EQ(emb.text.shape(), (std::vector<std::size_t>{12, 64}));
  EXPECT_EQ(emb.visual.shape(), (std::vector<std::size_t>{6, 64}));
  const Tensor& bias = f.ckpt.params.at("visual.bias");
  const Tensor& seg = f.ckpt.params.at("embeddings.segment");
  for (std::size_t r = 0; r < 6; ++r) {
    for (std::size_t j = 0; j < 64; ++j) {
      EXPECT_DOUBLE_EQ(emb.visual.value().at(r, j), bias[j] + seg.at(1, j));
    }
  }
}

TEST(Model, VisualFeatureGradientStaysInItsRow) {
  const Fixture f = make_fixture();
  std::mt19937_64 rng(4);
  const Tensor w = testing::random_tensor({64}, rng);
  for (std::size_t row = 0; row < 6; ++row) {
    Tape tape;
    BoundParameters p(tape, f.ckpt.params, false);
    Var feats = tape.leaf(f.input.features, true);
    EmbeddedInputs emb = embed_inputs(tape, p, f.config, f.input, feats);
    Var picked = slice_rows(emb.visual, row, 1);
    tape.backward(sum(mul(picked, tape.constant(Tensor({1, 64}, w.storage())))));
    const Tensor g = feats.grad();
    for (std::size_t r = 0; r < 6; ++r) {
      double norm = 0.0;
      for (std::size_t j = 0; j < 8; ++j) norm += std::abs(g.at(r, j));
      if (r == row) {
        EXPECT_GT(norm, 0.0);
      } else {
        EXPECT_EQ(norm, 0.0);
      }
    }
  }
}

TEST(Model, AttentionTraceContracts) {
  const Fixture f = make_fixture();
  const ForwardResult a = forward(f.ckpt, f.input);
  const ForwardResult b = forward(f.ckpt, f.input);
  EXPECT_EQ(a.logit, b.logit);
  EXPECT_EQ(a.trace, b.trace);
  const SequenceLayout& layout = a.trace.layout();
  const std::size_t S = layout.seq_len();
  EXPECT_EQ(S, 18u);
  EXPECT_EQ(a.trace.num_layers(), 2u);
  EXPECT_EQ(a.trace.num_heads(), 4u);
  for (std::size_t l = 0; l < 2; ++l) {
    for (std::size_t h = 0; h < 4; ++h) {
      for (std::size_t q = 0; q < S; ++q) {
        double total = 0.0;
        for (std::size_t k = 0; k < S; ++k) {
          const double p = a.trace.at(l, h, q, k);
          if (layout.key_pad[k]) {
            EXPECT_EQ(p, 0.0);
          } else {
            EXPECT_GE(p, 0.0);
            EXPECT_LE(p, 1.0);
          }
          total += p;
        }
        EXPECT_NEAR(total, 1.0, 1e-9);
      }
    }
  }
}

TEST(Model, PadContentDoesNotMatter) {
  Fixture f = make_fixture();
  const ForwardResult base = forward(f.ckpt, f.input);
  for (std::size_t r = 4; r < 6; ++r) {
    for (std::size_t j = 0; j < 8; ++j) f.input.features.at(r, j) = 5.0 * (j + 1.0) * (r + 1.0);
  }
  const ForwardResult moved = forward(f.ckpt, f.input);
  EXPECT_EQ(moved.logit, base.logit);
  const SequenceLayout& layout = base.trace.layout();
  for (std::size_t l = 0; l < 2; ++l)
    for (std::size_t h = 0; h < 4; ++h)
      for (std::size_t q = 0; q < layout.seq_len(); ++q) {
        if (layout.key_pad[q]) continue;
        for (std::size_t k = 0; k < layout.seq_len(); ++k) {
          EXPECT_EQ(moved.trace.at(l, h, q, k), base.trace.at(l, h, q, k));
        }
      }
}

TEST(Model, ClassifyTieAndMonotonicity) {
  const Classification tie = classify(0.0);
  EXPECT_EQ(tie.p_hateful, 0.5);
  EXPECT_EQ(tie.label, Label::kHateful);
  EXPECT_EQ(classify(-1e-12).label, Label::kNonHateful);
  EXPECT_NEAR(classify(50.0).p_hateful, 1.0, 1e-15);
  double prev = 0.0;
  for (double z = -30.0; z <= 30.0; z += 0.5) {
    const double p = classify(z).p_hateful;
    EXPECT_GE(p, prev);
    prev = p;
  }
}

TEST(Model, EndToEndGradientCheck) {
  const WordPieceVocab vocab = synth_generate(SyntheticSpec{}).vocab;
  const ModelConfig config = gradcheck_default_config(vocab.size());
  const ModelCheckpoint ckpt = make_checkpoint(config, vocab, 21);
  const ModelInput input = prepare_input(config, vocab, random_record(config, vocab, 21));
  const ModelGradCheckReport report = model_grad_check(ckpt, input, {.samples = 250, .seed = 21});
  EXPECT_EQ(report.checks.size(), 250u);
  EXPECT_LE(report.max_relative_error, 1e-4) << report.worst.path;
}

TEST(Checkpoint, RoundTripGivesIdenticalLogits) {
  const Fixture f = make_fixture();
  auto dir = testing::temp_dir("ckpt");
  save_checkpoint(f.ckpt, dir / "m.bin");
  const ModelCheckpoint back = load_checkpoint(dir / "m.bin");
  EXPECT_EQ(back.params, f.ckpt.params);
  EXPECT_EQ(back.config, f.ckpt.config);
  EXPECT_EQ(back.vocab, f.ckpt.vocab);
  EXPECT_EQ(forward(back, f.input).logit, forward(f.ckpt, f.input).logit);
  EXPECT_EQ(checkpoint_hash(back), checkpoint_hash(f.ckpt));
}

TEST(Checkpoint, CorruptionIsReported) {
  const Fixture f = make_fixture();
  const std::string bytes = serialize_checkpoint(f.ckpt);
  EXPECT_EQ(bytes.substr(0, 4), "MMXP");
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() - 3)), LoadError);
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, 10)), LoadError);
  EXPECT_THROW(deserialize_checkpoint(bytes + "x"), LoadError);
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(bad_magic), LoadError);
  std::string bad_version = bytes;
  bad_version[4] = 9;
  try {
    deserialize_checkpoint(bad_version);
    FAIL();
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
}

TEST(Checkpoint, WrongShapeNamesTheTensor) {
  Fixture f = make_fixture();
  f.ckpt.params.at("layer1.ffn.in.bias") = Tensor({7}, 0.0);
  try {
    deserialize_checkpoint(serialize_checkpoint(f.ckpt));
    FAIL();
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("layer1.ffn.in.bias"), std::string::npos) << e.what();
  }
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  const SyntheticSpec spec = testing::small_spec(LabelRule::kTextOnly, 5);
  const SyntheticDataset ds = synth_generate(spec);
  const ModelConfig config = testing::small_config(spec);
  TrainOptions o;
  o.steps = 1;
  o.learning_rate = 0.0;
  const TrainResult r = train(config, ds.vocab, ds.train, o);
  EXPECT_EQ(r.checkpoint.params, make_checkpoint(config, ds.vocab, o.seed).params);
  EXPECT_EQ(r.loss_history.size(), 1u);
}

TEST(Train, SingleClassIsRejected) {
  const SyntheticSpec spec = testing::small_spec(LabelRule::kTextOnly, 5);
  SyntheticDataset ds = synth_generate(spec);
  DatasetSplit only_pos;
  for (const auto& r : ds.train.records)
    if (r.label == Label::kHateful) only_pos.records.push_back(r);
  EXPECT_THROW(train(testing::small_config(spec), ds.vocab, only_pos, {}), ValidationError);
  EXPECT_THROW(train(testing::small_config(spec), ds.vocab, DatasetSplit{}, {}), ValidationError);
}

TEST(Train, SameSeedIsBitIdentical) {
  const SyntheticSpec spec = testing::small_spec(LabelRule::kConjunction, 10);
  const SyntheticDataset ds = synth_generate(spec);
  TrainOptions o;
  o.steps = 5;
  o.batch_size = 4;
  o.seed = 3;
  const TrainResult a = train(testing::small_config(spec), ds.vocab, ds.train, o);
  const TrainResult b = train(testing::small_config(spec), ds.vocab, ds.train, o);
  EXPECT_EQ(checkpoint_hash(a.checkpoint), checkpoint_hash(b.checkpoint));
  EXPECT_EQ(a.loss_history, b.loss_history);
  o.seed = 4;
  const TrainResult c = train(testing::small_config(spec), ds.vocab, ds.train, o);
  EXPECT_NE(checkpoint_hash(a.checkpoint), checkpoint_hash(c.checkpoint));
}

TEST(Train, MemorizesTenRecords) {
  SyntheticSpec spec = testing::small_spec(LabelRule::kConjunction, 5);
  const SyntheticDataset ds = synth_generate(spec);
  ModelConfig config = testing::small_config(spec);
  config.num_layers = 2;
  config.num_heads = 4;
  config.hidden_dim = 64;
  config.ffn_dim = 128;
  TrainOptions o;
  o.steps = 300;
  o.batch_size = 10;
  const TrainResult r = train(config, ds.vocab, ds.train, o);
  ASSERT_EQ(ds.train.size(), 10u);
  EXPECT_LT(r.checkpoint.meta.final_loss, 0.05);
  EXPECT_EQ(accuracy(r.checkpoint, ds.train), 1.0);
}

}  // namespace
}  // namespace memescope
