#ifndef CIRCUIT_AUGMENTOR_H
#define CIRCUIT_AUGMENTOR_H

#include <stddef.h>
#include <stdint.h>

// Number of doubles in a process point.
#define CA_POINT_LEN 15

typedef enum CaStatus {
  CA_STATUS_OK = 0,
  CA_STATUS_NULL_POINTER = 1,
  CA_STATUS_INVALID_ARGUMENT = 2,
  CA_STATUS_BUFFER_TOO_SMALL = 3,
  CA_STATUS_VALIDATION = 4,
  CA_STATUS_DIMENSION = 5,
  CA_STATUS_OPERATING_REGION = 6,
  CA_STATUS_TRAINING = 7,
  CA_STATUS_EVAL = 8,
  CA_STATUS_PARSE = 9,
  CA_STATUS_IO = 10,
  CA_STATUS_PANIC = 11,
} CaStatus;

// Opaque tabular dataset.
typedef struct CaDataset CaDataset;

// Opaque trained generator checkpoint.
typedef struct CaGan CaGan;

// Opaque gate-level netlist.
typedef struct CaNetlist CaNetlist;

// Message for the last failed call on this thread, or null. Valid until the
// next call into this library from the same thread.
const char *ca_last_error(void);

// Library version as a static NUL-terminated string.
const char *ca_version(void);

// Writes the nominal process point into `out` (`CA_POINT_LEN` doubles).
//
// # Safety
// `out` must be null or point to `CA_POINT_LEN` writable doubles.
enum CaStatus ca_point_nominal(double *out);

// Per-pin delays in picoseconds of gate `kind` (for example "NAND2") at
// `point`, as lh/hl pairs in pin order. `written` receives the number of
// values needed even when `cap` is too small.
//
// # Safety
// `kind` must be a NUL-terminated string, `point` must hold `CA_POINT_LEN`
// doubles and `out` must have room for `cap` doubles.
enum CaStatus ca_gate_delay(const char *kind,
                            const double *point,
                            double *out,
                            uintptr_t cap,
                            uintptr_t *written);

// Samples `rows` points from the default ranges and labels them with
// `oracle` ("NAND2", "current_reference", ...).
//
// # Safety
// `oracle` must be a NUL-terminated string and `out` a writable handle slot.
enum CaStatus ca_dataset_generate(const char *oracle,
                                  uintptr_t rows,
                                  uint64_t seed,
                                  struct CaDataset **out);

// Loads a dataset from a CSV file and its schema file.
//
// # Safety
// Both paths must be NUL-terminated strings and `out` a writable handle slot.
enum CaStatus ca_dataset_load(const char *csv, const char *schema, struct CaDataset **out);

// Writes `data` as CSV plus its schema.
//
// # Safety
// `data` must be a live handle and both paths NUL-terminated strings.
enum CaStatus ca_dataset_save(const struct CaDataset *data, const char *csv, const char *schema);

// Row and column counts of `data`.
//
// # Safety
// `data` must be a live handle; `rows` and `cols` writable.
enum CaStatus ca_dataset_shape(const struct CaDataset *data, uintptr_t *rows, uintptr_t *cols);

// Copies every value of `data`, row-major, into `out`.
//
// # Safety
// `data` must be a live handle and `out` must have room for `cap` doubles.
enum CaStatus ca_dataset_values(const struct CaDataset *data,
                                double *out,
                                uintptr_t cap,
                                uintptr_t *written);

// # Safety
// `data` must be null or a handle not yet freed.
void ca_dataset_free(struct CaDataset *data);

// Loads a generator checkpoint written by `train-gan`.
//
// # Safety
// `checkpoint` must be a NUL-terminated string and `out` a writable handle slot.
enum CaStatus ca_gan_load(const char *checkpoint, struct CaGan **out);

// Draws `rows` artificial rows in original units. Equal seeds give equal rows.
//
// # Safety
// `gan` must be a live handle and `out` a writable handle slot.
enum CaStatus ca_gan_sample(const struct CaGan *gan,
                            uintptr_t rows,
                            uint64_t seed,
                            struct CaDataset **out);

// # Safety
// `gan` must be null or a handle not yet freed.
void ca_gan_free(struct CaGan *gan);

// Built-in netlist by name ("c17" or "rca4"), or a netlist TOML file when
// `name` is not a built-in.
//
// # Safety
// `name` must be a NUL-terminated string and `out` a writable handle slot.
enum CaStatus ca_netlist_open(const char *name, struct CaNetlist **out);

// Worst input-to-output delay of `net` at `point`, in picoseconds, with
// gate delays from the analytic model.
//
// # Safety
// `net` must be a live handle, `point` must hold `CA_POINT_LEN` doubles and
// `delay_ps` must be writable.
enum CaStatus ca_critical_path_delay(const struct CaNetlist *net,
                                     const double *point,
                                     double *delay_ps);

// # Safety
// `net` must be null or a handle not yet freed.
void ca_netlist_free(struct CaNetlist *net);

// Singular values, descending, of the row-major `rows` x `cols` matrix.
// `written` receives min(rows, cols).
//
// # Safety
// `values` must hold `rows * cols` doubles and `out` must have room for
// `cap` doubles.
enum CaStatus ca_singular_values(const double *values,
                                 uintptr_t rows,
                                 uintptr_t cols,
                                 double *out,
                                 uintptr_t cap,
                                 uintptr_t *written);

#endif  /* CIRCUIT_AUGMENTOR_H */
