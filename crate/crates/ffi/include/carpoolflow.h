#ifndef CARPOOLFLOW_H
#define CARPOOLFLOW_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CpfStatus {
  CPF_STATUS_OK = 0,
  CPF_STATUS_NULL_POINTER = 1,
  CPF_STATUS_INVALID_ARGUMENT = 2,
  CPF_STATUS_PARSE_ERROR = 3,
  CPF_STATUS_IO_ERROR = 4,
  CPF_STATUS_RUNTIME_ERROR = 5,
  CPF_STATUS_BUFFER_TOO_SMALL = 6,
  CPF_STATUS_PANIC = 7,
} CpfStatus;

// Meeting points and directed edges.
typedef struct CpfNetwork CpfNetwork;

// Traces reduced to their meeting point passes along one line.
typedef struct CpfSimplified CpfSimplified;

// GPS traces loaded from CSV.
typedef struct CpfTraces CpfTraces;

typedef struct CpfWeeklyComparison {
  double door_wait_minutes;
  double meeting_wait_minutes;
  // `(meeting - door) / door` as a fraction.
  double change;
} CpfWeeklyComparison;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *cpf_version(void);

// Message of the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call on this thread.
const char *cpf_last_error_message(void);

// Loads a network from a nodes CSV and an edges CSV.
//
// # Safety
// Paths must be NUL-terminated strings; `out` must be writable.
enum CpfStatus cpf_network_load(const char *nodes_path,
                                const char *edges_path,
                                struct CpfNetwork **out);

// # Safety
// `network` must come from [`cpf_network_load`] and not be freed twice.
void cpf_network_free(struct CpfNetwork *network);

// Number of meeting points; 0 for a null handle.
//
// # Safety
// `network` must be null or a live handle.
size_t cpf_network_node_count(const struct CpfNetwork *network);

// Loads a trace CSV. Malformed rows and invalid traces are skipped; the
// number skipped is written to `rejected` when it is not null.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum CpfStatus cpf_traces_load(const char *path, struct CpfTraces **out, size_t *rejected);

// # Safety
// `traces` must come from [`cpf_traces_load`] and not be freed twice.
void cpf_traces_free(struct CpfTraces *traces);

// # Safety
// `traces` must be null or a live handle.
size_t cpf_traces_len(const struct CpfTraces *traces);

// Simplifies every trace onto `line` (e.g. `"B>V>S"`). Arrivals must fall
// in `window` (`"HH:MM-HH:MM"`, local to `utc_offset`, null for UTC).
//
// # Safety
// Handles must be live; strings NUL-terminated; `out` writable.
enum CpfStatus cpf_simplify(const struct CpfNetwork *network,
                            const struct CpfTraces *traces,
                            const char *line,
                            const char *window,
                            const char *utc_offset,
                            double radius_m,
                            struct CpfSimplified **out);

// # Safety
// `simplified` must come from [`cpf_simplify`] and not be freed twice.
void cpf_simplified_free(struct CpfSimplified *simplified);

// # Safety
// `simplified` must be null or a live handle.
size_t cpf_simplified_len(const struct CpfSimplified *simplified);

// Mean compression rate over the simplified traces; NaN when empty.
//
// # Safety
// `simplified` must be null or a live handle.
double cpf_simplified_mean_compression(const struct CpfSimplified *simplified);

// Writes the simplified-trace CSV to `path`.
//
// # Safety
// `simplified` must be live; `path` NUL-terminated.
enum CpfStatus cpf_simplified_write_csv(const struct CpfSimplified *simplified, const char *path);

// Drivers per bin per day at the line's first meeting point. The number
// of bins is written to `len_out`; when `capacity` is smaller the call
// returns `BufferTooSmall` and writes nothing else, so a first call with
// `capacity = 0` sizes the buffer.
//
// # Safety
// `counts_out` must hold `capacity` doubles (may be null when 0).
enum CpfStatus cpf_driver_flow(const struct CpfSimplified *simplified,
                               const char *window,
                               const char *utc_offset,
                               uint32_t bin_minutes,
                               uint32_t day_count,
                               double *counts_out,
                               size_t capacity,
                               size_t *len_out);

// Predicted waits `bin_minutes / count`, NaN where a count is zero.
//
// # Safety
// `counts` and `waits_out` must each hold `len` doubles.
enum CpfStatus cpf_wait_times(const double *counts,
                              size_t len,
                              uint32_t bin_minutes,
                              double *waits_out);

// Monte Carlo estimate of the door-to-door match probability over `n`
// sub-cubes.
//
// # Safety
// `out` must be writable.
enum CpfStatus cpf_match_probability_mc(uint64_t n, uint64_t samples, uint64_t seed, double *out);

// Geolocated drivers over the route-inferred driver population.
//
// # Safety
// `out` must be writable.
enum CpfStatus cpf_participation_rate(double n_tilde, double n0, double *out);

// Waits over a window from weekly door-to-door and meeting point counts.
//
// # Safety
// `out` must be writable.
enum CpfStatus cpf_weekly_comparison(double door_count,
                                     double meeting_count,
                                     double window_minutes,
                                     uint32_t operating_days,
                                     struct CpfWeeklyComparison *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CARPOOLFLOW_H */
