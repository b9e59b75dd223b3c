#ifndef SPARSE_ISING_H
#define SPARSE_ISING_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Sweep schedule of a chain.
typedef enum SiMode {
  SI_MODE_CHROMATIC = 0,
  SI_MODE_SEQUENTIAL = 1,
  SI_MODE_PARALLEL = 2,
} SiMode;

typedef enum SiRng {
  SI_RNG_COUNTER = 0,
  SI_RNG_LFSR = 1,
} SiRng;

// Result codes.
typedef enum SiStatus {
  SI_STATUS_OK = 0,
  SI_STATUS_NULL_POINTER = 1,
  SI_STATUS_INVALID_ARGUMENT = 2,
  SI_STATUS_PARSE = 3,
  SI_STATUS_TOO_LARGE = 4,
  SI_STATUS_BUFFER_TOO_SMALL = 5,
  SI_STATUS_INTERNAL = 6,
} SiStatus;

// Markov chain over a model.
typedef struct SiChain SiChain;

// Gate netlist.
typedef struct SiCircuit SiCircuit;

// Compiled Ising model.
typedef struct SiModel SiModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next failing call on the same thread.
const char *si_last_error(void);

// Frees a string returned by this library.
//
// # Safety
// `s` must come from this library and not be freed twice.
void si_string_free(char *s);

// Array-multiplier factorizer for `m`-bit factors.
//
// # Safety
// The output slot must be a valid pointer.
enum SiStatus si_circuit_factorizer(size_t m, struct SiCircuit **out_circuit);

// 3-SAT circuit from DIMACS text, output clamped true.
//
// # Safety
// `dimacs` must be a nul-terminated string and the output slot a valid pointer.
enum SiStatus si_circuit_sat(const char *dimacs, struct SiCircuit **out_circuit);

// Circuit from its JSON form.
//
// # Safety
// `json` must be a nul-terminated string and the output slot a valid pointer.
enum SiStatus si_circuit_from_json(const char *json, struct SiCircuit **out_circuit);

// JSON form of a circuit; free with `si_string_free`.
//
// # Safety
// `circuit` must be a live handle and the output slot a valid pointer.
enum SiStatus si_circuit_to_json(const struct SiCircuit *circuit, char **out_json);

// Clamps a factorizer's outputs to the product `hi * 2^64 + lo`.
//
// # Safety
// `circuit` must be a live handle.
enum SiStatus si_circuit_clamp_product(struct SiCircuit *circuit, uint64_t lo, uint64_t hi);

// Records known factors as the planted ground state.
//
// # Safety
// `circuit` must be a live handle.
enum SiStatus si_circuit_plant_factors(struct SiCircuit *circuit, uint64_t a, uint64_t b);

// Degree-bounded copy of a circuit. A `copy_weight` of 0 selects the default.
//
// # Safety
// `circuit` must be a live handle and the output slot a valid pointer.
enum SiStatus si_circuit_sparsify(const struct SiCircuit *circuit,
                                  size_t k,
                                  int32_t copy_weight,
                                  struct SiCircuit **out_circuit);

// Node count; 0 for a null handle.
//
// # Safety
// `circuit` must be null or a live handle.
size_t si_circuit_num_nodes(const struct SiCircuit *circuit);

// Compiles the circuit into a model.
//
// # Safety
// `circuit` must be a live handle and the output slot a valid pointer.
enum SiStatus si_circuit_compose(const struct SiCircuit *circuit, struct SiModel **out_model);

// Reads the factors from a state of the (possibly sparsified) factorizer.
//
// # Safety
// `values` must hold `len` spins; `a` and `b` must be valid pointers.
enum SiStatus si_circuit_decode_factors(const struct SiCircuit *circuit,
                                        const int8_t *values,
                                        size_t len,
                                        uint64_t *a,
                                        uint64_t *b);

// Satisfied clause count of a SAT circuit state.
//
// # Safety
// `values` must hold `len` spins and `count` must be a valid pointer.
enum SiStatus si_circuit_satisfied_clauses(const struct SiCircuit *circuit,
                                           const int8_t *values,
                                           size_t len,
                                           size_t *count);

// # Safety
// `circuit` must be null or a live handle, not used afterwards.
void si_circuit_free(struct SiCircuit *circuit);

// Model from its JSON form.
//
// # Safety
// `json` must be a nul-terminated string and the output slot a valid pointer.
enum SiStatus si_model_from_json(const char *json, struct SiModel **out_model);

// # Safety
// `model` must be null or a live handle.
size_t si_model_num_nodes(const struct SiModel *model);

// Energy of a state given in the model's own representation.
//
// # Safety
// `values` must hold `len` entries and `energy` must be a valid pointer.
enum SiStatus si_model_energy(const struct SiModel *model,
                              const int8_t *values,
                              size_t len,
                              double *energy);

// Number of DSATUR colors of the model's free nodes.
//
// # Safety
// `model` must be a live handle and `colors` a valid pointer.
enum SiStatus si_model_num_colors(const struct SiModel *model, size_t *colors);

// # Safety
// `model` must be null or a live handle, not used afterwards.
void si_model_free(struct SiModel *model);

// Chain with a random start and a DSATUR coloring. The chain keeps its own
// copy of the model.
//
// # Safety
// `model` must be a live handle and the output slot a valid pointer.
enum SiStatus si_chain_new(const struct SiModel *model,
                           enum SiRng rng,
                           uint64_t seed,
                           struct SiChain **out_chain);

// Runs `sweeps` sweeps at inverse temperature `beta`.
//
// # Safety
// `chain` must be a live handle.
enum SiStatus si_chain_sweep(struct SiChain *chain, enum SiMode mode, double beta, uint64_t sweeps);

// Copies the bipolar state into `values`, which must have room for every node.
//
// # Safety
// `values` must point to `len` writable bytes.
enum SiStatus si_chain_state(const struct SiChain *chain, int8_t *values, size_t len);

// Current energy; NaN for a null handle.
//
// # Safety
// `chain` must be null or a live handle.
double si_chain_energy(const struct SiChain *chain);

// Node updates performed so far; 0 for a null handle.
//
// # Safety
// `chain` must be null or a live handle.
uint64_t si_chain_flips(const struct SiChain *chain);

// # Safety
// `chain` must be null or a live handle, not used afterwards.
void si_chain_free(struct SiChain *chain);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPARSE_ISING_H */
