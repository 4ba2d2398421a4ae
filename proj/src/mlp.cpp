#include "evotune/mlp.hpp"

#include <fmt/format.h>

namespace evotune {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::logistic: return "logistic";
  }
  return "?";
}

std::string_view to_string(Solver s) { return s == Solver::adam ? "adam" : "sgd"; }

Activation parse_activation(std::string_view text) {
  if (text == "relu") return Activation::relu;
  if (text == "tanh") return Activation::tanh;
  if (text == "logistic") return Activation::logistic;
  throw InvalidInput(fmt::format("unknown activation '{}'", text));
}

Solver parse_solver(std::string_view text) {
  if (text == "adam") return Solver::adam;
  if (text == "sgd") return Solver::sgd;
  throw InvalidInput(fmt::format("unknown solver '{}'", text));
}

}  // namespace evotune
