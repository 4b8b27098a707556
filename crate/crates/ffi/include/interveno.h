#ifndef INTERVENO_H
#define INTERVENO_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum IvStatus {
  IV_STATUS_OK = 0,
  IV_STATUS_NULL_ARGUMENT = 1,
  IV_STATUS_INVALID_UTF8 = 2,
  /**
   * Malformed CSV, bad date, non-numeric cell, region mismatch.
   */
  IV_STATUS_INVALID_INPUT = 3,
  /**
   * Too few rows or days of history, or zero variance.
   */
  IV_STATUS_INSUFFICIENT_DATA = 4,
  IV_STATUS_INVALID_PARAMS = 5,
  IV_STATUS_INVALID_SCENARIO = 6,
  /**
   * Corrupt artifact, bad checksum, unsupported version, bad JSON.
   */
  IV_STATUS_PARSE = 7,
  IV_STATUS_IO = 8,
  IV_STATUS_NUMERICAL = 9,
  IV_STATUS_CONFIG = 10,
  IV_STATUS_PANIC = 99,
} IvStatus;

typedef struct IvConfig IvConfig;

typedef struct IvFrame IvFrame;

/**
 * A trained cases/revenue model pair.
 */
typedef struct IvModels IvModels;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. Valid until
 * the next call into the library from the same thread.
 */
const char *iv_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *iv_version(void);

void iv_string_free(char *s);

/**
 * Parses and imputes a region CSV of `len` bytes.
 */
enum IvStatus iv_frame_from_csv(const uint8_t *data,
                                size_t len,
                                const char *region_id,
                                struct IvFrame **out);

enum IvStatus iv_frame_len(const struct IvFrame *frame, size_t *out);

void iv_frame_free(struct IvFrame *frame);

enum IvStatus iv_config_default(struct IvConfig **out);

/**
 * Reads a `key = value` config file.
 */
enum IvStatus iv_config_load(const char *path, struct IvConfig **out);

enum IvStatus iv_config_set(struct IvConfig *cfg, const char *key, const char *value);

void iv_config_free(struct IvConfig *cfg);

/**
 * Trains the cases and revenue ensembles. A NULL `cfg` uses defaults.
 */
enum IvStatus iv_models_train(const struct IvFrame *frame,
                              const struct IvConfig *cfg,
                              struct IvModels **out);

/**
 * Writes `cases.json` and `revenue.json` into an existing directory.
 */
enum IvStatus iv_models_save(const struct IvModels *models, const char *dir);

enum IvStatus iv_models_load(const char *dir, struct IvModels **out);

void iv_models_free(struct IvModels *models);

/**
 * Baseline and scenario forecast as JSON. `scenario_json` is a scenario
 * object; NULL means the baseline over the default horizon.
 */
enum IvStatus iv_forecast_json(const struct IvModels *models,
                               const struct IvFrame *frame,
                               const char *scenario_json,
                               char **out);

/**
 * Out-of-time back-test report as JSON. A NULL `cfg` uses defaults.
 */
enum IvStatus iv_backtest_json(const struct IvFrame *frame, const struct IvConfig *cfg, char **out);

/**
 * Applies vaccine protection to `n` forecast values in place of `out`.
 * `coverage` holds one cumulative coverage fraction per day.
 */
enum IvStatus iv_vaccine_adjust(const double *cases,
                                const double *coverage,
                                size_t n,
                                double efficacy,
                                double generation_interval_days,
                                double *out);

/**
 * Sets `*out` to 1 when a model trained through `trained_through` is due
 * for retraining on `today`, else 0. Dates are `YYYY-MM-DD`.
 */
enum IvStatus iv_retrain_due(const char *trained_through, const char *today, int32_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* INTERVENO_H */
