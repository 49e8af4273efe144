#ifndef NTKLAB_H
#define NTKLAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum NtkStatus {
  NTK_STATUS_OK = 0,
  NTK_STATUS_NULL_POINTER = 1,
  NTK_STATUS_INVALID_ARGUMENT = 2,
  NTK_STATUS_NUMERICAL = 3,
  NTK_STATUS_IO = 4,
  NTK_STATUS_PANIC = 5,
} NtkStatus;

// How the per-sample loss gradients are combined in a training step.
typedef enum NtkGradientScale {
  NTK_GRADIENT_SCALE_MEAN = 0,
  NTK_GRADIENT_SCALE_SUM = 1,
} NtkGradientScale;

// Opaque labelled dataset.
typedef struct NtkDataset NtkDataset;

// Opaque network parameters.
typedef struct NtkNetwork NtkNetwork;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL. Valid until the
// next failing call on the same thread.
const char *ntk_last_error(void);

// Library version as a static NUL-terminated string.
const char *ntk_version(void);

// Symmetric initialisation. `width` must be even.
enum NtkStatus ntk_network_init(size_t depth,
                                size_t width,
                                size_t input_dim,
                                uint64_t seed,
                                struct NtkNetwork **out_net);

void ntk_network_free(struct NtkNetwork *net);

enum NtkStatus ntk_network_shape(const struct NtkNetwork *net,
                                 size_t *depth,
                                 size_t *width,
                                 size_t *input_dim);

// `f_W(x)` for a unit vector `x` of length `len`.
enum NtkStatus ntk_forward(const struct NtkNetwork *net,
                           const double *x,
                           size_t len,
                           double *out_value);

enum NtkStatus ntk_network_save(const struct NtkNetwork *net, const char *path, uint64_t step);

enum NtkStatus ntk_network_load(const char *path, struct NtkNetwork **out_net);

// Dataset from `n` row-major inputs of dimension `dim` and `n` labels in {-1, +1}.
enum NtkStatus ntk_dataset_new(const double *inputs,
                               const double *labels,
                               size_t n,
                               size_t dim,
                               struct NtkDataset **out_data);

// `n` noisy 2-XOR samples in dimension `dim >= 3`.
enum NtkStatus ntk_xor_sample(size_t dim, size_t n, uint64_t seed, struct NtkDataset **out_data);

// All `2^dim` support points of the 2-XOR distribution.
enum NtkStatus ntk_xor_population(size_t dim, struct NtkDataset **out_data);

void ntk_dataset_free(struct NtkDataset *data);

enum NtkStatus ntk_dataset_len(const struct NtkDataset *data, size_t *out_len);

enum NtkStatus ntk_empirical_risk(const struct NtkNetwork *net,
                                  const struct NtkDataset *data,
                                  double *out_risk);

// Full-batch gradient descent for `steps` steps; returns the final network as a new handle.
enum NtkStatus ntk_train(const struct NtkNetwork *net,
                         const struct NtkDataset *data,
                         double eta,
                         size_t steps,
                         enum NtkGradientScale scale,
                         struct NtkNetwork **out_net,
                         double *out_final_risk);

// Exact 0-1 error (ties count half) and logistic loss over an enumerated population.
enum NtkStatus ntk_population_metrics(const struct NtkNetwork *net,
                                      const struct NtkDataset *population,
                                      double *out_zero_one,
                                      double *out_logistic);

// Hard margin of the tangent features at `init` (0 when not separable).
enum NtkStatus ntk_margin(const struct NtkNetwork *init,
                          const struct NtkDataset *data,
                          double tol,
                          double *out_gamma,
                          double *out_dual_gap);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NTKLAB_H */
