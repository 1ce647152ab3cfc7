#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "gridflow/grid_model.hpp"
#include "gridflow/samples.hpp"
#include "gridflow/solution.hpp"

namespace gridflow {

enum class Activation { relu, leaky_relu };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view s);  ///< throws std::invalid_argument

inline constexpr double kLeakySlope = 0.01;

/// Dense network from 2n demands to 2n bounded voltages (vm_1..vm_n, va_1..va_n).
struct ModelSpec {
  int input_dim = 0;
  std::vector<int> hidden;
  Activation activation = Activation::leaky_relu;
  int output_dim = 0;
  Eigen::VectorXd out_min;  ///< per output
  Eigen::VectorXd out_max;

  void validate() const;  ///< throws std::invalid_argument

  /// Input 2n, output 2n with the voltage boxes of `network` as output bounds.
  static ModelSpec for_network(const Network& network, std::vector<int> hidden,
                               Activation activation = Activation::leaky_relu);
};

struct DenseLayer {
  Eigen::MatrixXd w;  ///< out x in
  Eigen::VectorXd b;
};

/// Per-feature standardisation of the demand input; std of constant features is 1.
struct Normalizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;

  static Normalizer identity(int dim);
  static Normalizer fit(const Eigen::MatrixXd& inputs);  ///< columns are samples
};

struct Model {
  ModelSpec spec;
  std::uint64_t seed = 0;
  std::vector<DenseLayer> layers;
  Normalizer normalizer;

  std::size_t parameter_count() const;
  Eigen::VectorXd parameters() const;  ///< layer by layer: W (column-major) then b
  void set_parameters(const Eigen::VectorXd& flat);
  bool operator==(const Model& other) const;
};

/// He-uniform weights (limit sqrt(6 / fan_in)), zero biases, identity normaliser.
Model init_model(const ModelSpec& spec, std::uint64_t seed);

/// Stacks demands as network inputs: column b = [pd; qd] of sample b.
Eigen::MatrixXd stack_inputs(const std::vector<DemandVector>& demands);

/// Batched forward pass; returns the 2n x B bounded outputs.
Eigen::MatrixXd forward(const Model& model, const Eigen::MatrixXd& inputs);
VoltageProfile forward(const Model& model, const DemandVector& demand);

/// Voltages, recovered dispatch (unclipped) and reconstructed demand for one input.
struct PhysicsOutput {
  OpfSolution solution;  ///< source nn; pg/qg from the power-flow equations, not clipped
  DemandVector reconstructed;
};

PhysicsOutput physics_forward(const Model& model, const Network& network, const AdmittanceMatrix& ybus,
                              const DemandVector& demand);

enum class LossMode { physics_informed, supervised_only };

std::string_view to_string(LossMode m);
LossMode loss_mode_from_string(std::string_view s);  ///< accepts physics|supervised and the long forms

/// Terms of the training loss: bus expectations (pd/qd reconstruction, vm, va) plus generator
/// expectations (pg, qg), each averaged over its index set and over the batch.
struct LossBreakdown {
  double v_mse = 0.0;
  double phi_mse = 0.0;
  double pg_mse = 0.0;
  double qg_mse = 0.0;
  double pd_recon_mse = 0.0;
  double qd_recon_mse = 0.0;
  double total = 0.0;

  void finalize() { total = pd_recon_mse + qd_recon_mse + v_mse + phi_mse + pg_mse + qg_mse; }
};

LossBreakdown loss(const Network& network, const OpfSolution& predicted, const DemandVector& reconstructed,
                   const OpfSolution& label, const DemandVector& input, LossMode mode = LossMode::physics_informed);

/// Column-major batch of labelled samples.
struct Batch {
  Eigen::MatrixXd inputs;  ///< 2n x B raw demands
  Eigen::MatrixXd vm, va;  ///< n x B labels
  Eigen::MatrixXd pg, qg;  ///< ng x B labels, generator_buses() order

  int size() const { return static_cast<int>(inputs.cols()); }
  static Batch from_samples(const Network& network, const std::vector<LabeledSample>& samples);
  static Batch from_samples(const Network& network, const std::vector<LabeledSample>& samples,
                            const std::vector<std::size_t>& indices);
};

struct ModelGradient {
  std::vector<DenseLayer> layers;  ///< same shapes as the model

  Eigen::VectorXd flatten() const;
};

/// Mean batch loss and (optionally) its exact gradient with respect to every parameter,
/// including the paths through dispatch recovery and demand reconstruction.
LossBreakdown loss_and_gradient(const Model& model, const Eigen::MatrixXcd& ybus, const Network& network,
                                const Batch& batch, LossMode mode, ModelGradient* gradient);

/// Checkpoint: JSON with spec, normaliser, seed and weights; doubles round-trip exactly.
void save_model(std::ostream& out, const Model& model, std::string_view case_name = {});
Model load_model(std::istream& in);
void save_model(const std::string& path, const Model& model, std::string_view case_name = {});
Model load_model(const std::string& path);

}  // namespace gridflow
