#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace uniseg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Index = Eigen::Index;

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid while the Tape lives.
class Var {
 public:
  Var() = default;

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double scalar() const;
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Values seen by detach(), recorded once and replayed afterwards. Replaying
// lets a finite-difference oracle evaluate a loss with stop-gradient
// semantics: detached quantities stay at their base-point values.
class StopGradientCache {
 public:
  enum class Mode { kRecord, kReplay };

  void start_record() {
    values_.clear();
    mode_ = Mode::kRecord;
  }
  void start_replay() {
    mode_ = Mode::kReplay;
    cursor_ = 0;
  }
  Mode mode() const { return mode_; }

  Matrix exchange(const Matrix& value);

 private:
  Mode mode_ = Mode::kRecord;
  std::vector<Matrix> values_;
  std::size_t cursor_ = 0;
};

// Reverse-mode tape. Nodes are appended in execution order, so node ids are
// a topological order and backward() is a single reverse sweep.
class Tape {
 public:
  // Accumulates d(loss)/d(input) into `input_grads[k]`; entries are null for
  // inputs that do not require grad.
  using Backward = std::function<void(const Tape& tape, const Matrix& out_grad,
                                      std::span<Matrix* const> input_grads)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var variable(Matrix value);

  // Appends an operation result. Throws NumericError (naming `op`) when the
  // value holds NaN/Inf.
  Var record(const char* op, Matrix value, std::initializer_list<Var> inputs, Backward backward);
  Var record(const char* op, Matrix value, const std::vector<Var>& inputs, Backward backward);

  // Constant copy of `v`. With a StopGradientCache attached the value is
  // recorded or replayed through it.
  Var detach(Var v);
  void set_stop_gradient_cache(StopGradientCache* cache) { stop_gradient_ = cache; }

  const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

  // Gradients of a 1x1 `loss` with respect to every node. Throws
  // ContractError if `loss` is not scalar.
  void backward(Var loss);

  // Gradient of the last backward() loss; zeros for nodes it never reached.
  Matrix grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }

  // Running hash of which side of zero every relu input fell on. Two
  // evaluations with equal signatures lie on the same smooth piece.
  void note_activation_pattern(const Matrix& pre);
  std::uint64_t activation_signature() const { return signature_; }

 private:
  struct Node {
    Matrix value;
    bool requires_grad = false;
    std::vector<int> inputs;
    Backward backward;
  };

  Var push(Matrix value, bool requires_grad, std::vector<int> inputs, Backward backward);

  std::vector<Node> nodes_;
  std::vector<Matrix> grads_;
  StopGradientCache* stop_gradient_ = nullptr;
  std::uint64_t signature_ = 0xcbf29ce484222325ULL;
};

// Named trainable tensor.
struct Parameter {
  std::string name;
  Matrix value;
};

// Ordered, name-addressable parameter collection. Gradients are vectors of
// matrices in the same order.
class ParameterSet {
 public:
  std::size_t add(std::string name, Matrix value);
  std::size_t size() const { return params_.size(); }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  std::size_t index_of(const std::string& name) const;

  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  Matrix& value(const std::string& name) { return params_[index_of(name)].value; }
  const Matrix& value(const std::string& name) const { return params_[index_of(name)].value; }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::size_t scalar_count() const;

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

using Gradients = std::vector<Matrix>;

// Lazily places parameters on a tape. In training mode parameters become
// variables; otherwise constants, so evaluation records no backward closures.
class ParamBinder {
 public:
  ParamBinder(Tape& tape, const ParameterSet& params, bool trainable);

  Var operator()(const std::string& name);
  Tape& tape() const { return *tape_; }
  const ParameterSet& params() const { return *params_; }

  // Per-parameter gradients after tape.backward(); zeros for unbound ones.
  Gradients gradients() const;

 private:
  Tape* tape_;
  const ParameterSet* params_;
  bool trainable_;
  std::vector<Var> bound_;
};

}  // namespace uniseg
