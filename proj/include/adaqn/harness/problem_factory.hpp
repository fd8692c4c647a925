#pragma once

#include <memory>
#include <optional>
#include <string>

#include "adaqn/data/digits.hpp"
#include "adaqn/data/text_corpus.hpp"
#include "adaqn/harness/config.hpp"
#include "adaqn/problems/logistic.hpp"
#include "adaqn/problems/quadratic.hpp"
#include "adaqn/problems/rnn.hpp"

namespace adaqn::harness {

struct ProblemInstance {
  std::shared_ptr<const StochasticObjective> train;
  std::shared_ptr<const StochasticObjective> test;  // same object as train when there is no held-out split
  std::optional<double> min_value;                  // known optimum of the test objective
  ParamVector w0;
  std::string loss_units = "nats";
  bool classification = false;
};

namespace detail {

inline problems::Activation activation_of(const std::string& name) {
  return name == "relu" ? problems::Activation::Relu : problems::Activation::Tanh;
}

inline problems::LogisticProblem logistic_rows(const problems::LogisticProblem& all, Eigen::Index first,
                                               Eigen::Index count) {
  return problems::LogisticProblem(all.features().middleRows(first, count), all.labels().segment(first, count));
}

inline data::PixelSequences pixel_slice(const data::PixelSequences& all, std::size_t first, std::size_t last) {
  data::PixelSequences out;
  out.seq_len = all.seq_len;
  out.num_classes = all.num_classes;
  out.pixels.assign(all.pixels.begin() + static_cast<std::ptrdiff_t>(first),
                    all.pixels.begin() + static_cast<std::ptrdiff_t>(last));
  out.labels.assign(all.labels.begin() + static_cast<std::ptrdiff_t>(first),
                    all.labels.begin() + static_cast<std::ptrdiff_t>(last));
  return out;
}

}  // namespace detail

inline ProblemInstance make_problem(const ProblemConfig& p) {
  ProblemInstance inst;
  if (p.type == "quadratic") {
    problems::QuadraticSpec spec;
    spec.spectrum = problems::geometric_spectrum(p.dimension, p.condition);
    spec.rotate = p.rotate;
    spec.examples = p.examples;
    spec.noise = p.noise;
    spec.seed = p.seed;
    auto q = std::make_shared<problems::QuadraticProblem>(spec);
    inst.min_value = q->min_value();
    inst.train = q;
    inst.test = q;
    inst.w0.assign(p.dimension, 0.0);
    inst.loss_units = "objective value";
  } else if (p.type == "logistic") {
    const auto all = problems::LogisticProblem::synthetic(p.examples + p.test_examples, p.features, p.seed);
    const auto m = static_cast<Eigen::Index>(p.examples);
    inst.train = std::make_shared<problems::LogisticProblem>(detail::logistic_rows(all, 0, m));
    inst.test = p.test_examples > 0 ? std::make_shared<problems::LogisticProblem>(
                                          detail::logistic_rows(all, m, static_cast<Eigen::Index>(p.test_examples)))
                                    : inst.train;
    inst.w0.assign(p.features, 0.0);
    inst.classification = true;
  } else if (p.type == "char_lm") {
    const auto mode = p.token_mode == "word" ? data::TokenMode::Word : data::TokenMode::Char;
    data::IngestedText text = data::ingest_text(p.corpus, mode, p.seq_len, p.split);
    const auto act = detail::activation_of(p.activation);
    const bool has_test = text.test.size() > 0;
    auto train = std::make_shared<problems::CharLmObjective>(p.hidden, p.layers, std::move(text.train), act);
    inst.train = train;
    inst.test = has_test ? std::make_shared<problems::CharLmObjective>(p.hidden, p.layers, std::move(text.test), act)
                         : inst.train;
    inst.w0 = problems::rnn_initial_weights(train->network().architecture(), p.seed, p.init_stddev);
  } else if (p.type == "pixel_digits") {
    const auto all = data::synth_digits(p.examples + p.test_examples, p.image_size, p.seed);
    const auto act = detail::activation_of(p.activation);
    auto train = std::make_shared<problems::PixelSequenceObjective>(
        p.hidden, p.layers, detail::pixel_slice(all, 0, p.examples), act);
    inst.train = train;
    inst.test = p.test_examples > 0
                    ? std::make_shared<problems::PixelSequenceObjective>(
                          p.hidden, p.layers, detail::pixel_slice(all, p.examples, all.size()), act)
                    : inst.train;
    inst.w0 = problems::rnn_initial_weights(train->network().architecture(), p.seed, p.init_stddev);
    inst.classification = true;
  } else {
    throw ConfigError("unknown problem type '" + p.type + "'");
  }
  return inst;
}

}  // namespace adaqn::harness
