#include "uniseg/autodiff.hpp"

#include "uniseg/errors.hpp"
#include "uniseg/rng.hpp"

#include <algorithm>
#include <numeric>

namespace uniseg {

const Matrix& Var::value() const { return tape_->value(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw DimensionError("scalar(): value is not 1x1");
  return v(0, 0);
}

bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Matrix StopGradientCache::exchange(const Matrix& value) {
  if (mode_ == Mode::kRecord) {
    values_.push_back(value);
    return value;
  }
  if (cursor_ >= values_.size()) {
    throw ContractError("stop-gradient replay requested more values than were recorded");
  }
  return values_[cursor_++];
}

Var Tape::push(Matrix value, bool requires_grad, std::vector<int> inputs, Backward backward) {
  nodes_.push_back(Node{std::move(value), requires_grad, std::move(inputs), std::move(backward)});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

void Tape::note_activation_pattern(const Matrix& pre) {
  for (Index i = 0; i < pre.size(); ++i) {
    signature_ = (signature_ ^ (pre.data()[i] > 0.0 ? 1u : 0u)) * 0x100000001b3ULL;
  }
}

Var Tape::constant(Matrix value) { return push(std::move(value), false, {}, nullptr); }

Var Tape::variable(Matrix value) { return push(std::move(value), true, {}, nullptr); }

Var Tape::record(const char* op, Matrix value, std::initializer_list<Var> inputs,
                 Backward backward) {
  return record(op, std::move(value), std::vector<Var>(inputs), std::move(backward));
}

Var Tape::record(const char* op, Matrix value, const std::vector<Var>& inputs,
                 Backward backward) {
  if (!value.allFinite()) {
    throw NumericError(std::string(op) + ": non-finite output");
  }
  bool any = false;
  std::vector<int> ids;
  ids.reserve(inputs.size());
  for (const Var& in : inputs) {
    if (in.tape() != this) throw ContractError(std::string(op) + ": input from another tape");
    ids.push_back(in.id());
    any = any || requires_grad(in.id());
  }
  if (!any) return push(std::move(value), false, {}, nullptr);
  return push(std::move(value), true, std::move(ids), std::move(backward));
}

Var Tape::detach(Var v) {
  if (stop_gradient_ == nullptr) return constant(v.value());
  return constant(stop_gradient_->exchange(v.value()));
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw ContractError("backward: loss belongs to another tape");
  if (loss.value().size() != 1) throw ContractError("backward: loss must be a 1x1 scalar");

  grads_.assign(nodes_.size(), Matrix());
  const auto root = static_cast<std::size_t>(loss.id());
  grads_[root] = Matrix::Ones(1, 1);

  std::vector<Matrix*> input_grads;
  for (std::size_t i = root + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.requires_grad || !node.backward || grads_[i].size() == 0) continue;
    input_grads.clear();
    for (int in : node.inputs) {
      const auto k = static_cast<std::size_t>(in);
      if (!nodes_[k].requires_grad) {
        input_grads.push_back(nullptr);
        continue;
      }
      if (grads_[k].size() == 0) {
        grads_[k] = Matrix::Zero(nodes_[k].value.rows(), nodes_[k].value.cols());
      }
      input_grads.push_back(&grads_[k]);
    }
    node.backward(*this, grads_[i], input_grads);
  }
}

Matrix Tape::grad(Var v) const {
  const auto k = static_cast<std::size_t>(v.id());
  if (k < grads_.size() && grads_[k].size() != 0) return grads_[k];
  return Matrix::Zero(v.rows(), v.cols());
}

std::size_t ParameterSet::add(std::string name, Matrix value) {
  if (contains(name)) throw ContractError("duplicate parameter name: " + name);
  index_.emplace(name, params_.size());
  params_.push_back(Parameter{std::move(name), std::move(value)});
  return params_.size() - 1;
}

std::size_t ParameterSet::index_of(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw LookupError("unknown parameter: " + name);
  return it->second;
}

std::size_t ParameterSet::scalar_count() const {
  return std::accumulate(params_.begin(), params_.end(), std::size_t{0},
                         [](std::size_t acc, const Parameter& p) {
                           return acc + static_cast<std::size_t>(p.value.size());
                         });
}

ParamBinder::ParamBinder(Tape& tape, const ParameterSet& params, bool trainable)
    : tape_(&tape), params_(&params), trainable_(trainable), bound_(params.size()) {}

Var ParamBinder::operator()(const std::string& name) {
  const std::size_t i = params_->index_of(name);
  if (!bound_[i].valid()) {
    const Matrix& value = (*params_)[i].value;
    bound_[i] = trainable_ ? tape_->variable(value) : tape_->constant(value);
  }
  return bound_[i];
}

Gradients ParamBinder::gradients() const {
  Gradients out;
  out.reserve(bound_.size());
  for (std::size_t i = 0; i < bound_.size(); ++i) {
    if (bound_[i].valid()) {
      out.push_back(tape_->grad(bound_[i]));
    } else {
      const Matrix& v = (*params_)[i].value;
      out.push_back(Matrix::Zero(v.rows(), v.cols()));
    }
  }
  return out;
}

std::vector<int> sample_without_replacement(int n, int count, Rng& rng) {
  std::vector<int> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), 0);
  rng.shuffle(all);
  all.resize(static_cast<std::size_t>(count));
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace uniseg
