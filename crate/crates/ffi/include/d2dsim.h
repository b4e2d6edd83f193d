/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef D2DSIM_H
#define D2DSIM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum D2dStatus {
  D2D_STATUS_OK = 0,
  // A required pointer argument was null.
  D2D_STATUS_NULL_ARGUMENT = 1,
  // A string argument was not valid UTF-8.
  D2D_STATUS_INVALID_UTF8 = 2,
  // A numeric argument was out of range.
  D2D_STATUS_INVALID_ARGUMENT = 3,
  // The scenario is malformed or inconsistent.
  D2D_STATUS_CONFIG = 4,
  // The run failed.
  D2D_STATUS_RUNTIME = 5,
  // A file could not be read or written.
  D2D_STATUS_IO = 6,
  // The library panicked; the handles passed in should be discarded.
  D2D_STATUS_PANIC = 7,
} D2dStatus;

typedef enum D2dMode {
  // Direct mode: the pair talks over the sidelink.
  D2D_MODE_DM = 0,
  // Infrastructure mode: traffic goes up to the eNB and back down.
  D2D_MODE_IM = 1,
} D2dMode;

// The metrics of one finished run.
typedef struct D2dReport D2dReport;

// A parsed scenario.
typedef struct D2dScenario D2dScenario;

// Run-wide counters of a report.
typedef struct D2dSummary {
  uint64_t tti_count;
  uint64_t seed;
  uint64_t offered_packets;
  uint64_t delivered_packets;
  uint64_t lost_packets;
  uint64_t in_flight_packets;
  // NaN when nothing was delivered.
  double mean_latency_ttis;
  uint64_t max_latency_ttis;
  uint64_t rbs_dl;
  uint64_t rbs_ul;
  uint64_t rbs_sl;
  uint64_t sl_cqi_reports;
  uint64_t mode_switches;
  uint64_t mode_switch_losses;
  uint64_t harq_multicast_violations;
  uint64_t rb_conservation_violations;
} D2dSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the last failure on this thread, or null after a
// successful call. The string stays valid until the next call into the
// library on the same thread.
const char *d2d_last_error(void);

// Library version as a static NUL-terminated string.
const char *d2d_version(void);

// Parses scenario text. On success `*out` receives a handle to release with
// [`d2d_scenario_free`].
//
// # Safety
// `text` is a NUL-terminated string; `out` is valid for writes.
enum D2dStatus d2d_scenario_parse(const char *text, struct D2dScenario **out);

// Reads and parses a scenario file. A relative CQI table path inside it is
// taken relative to the file's directory.
//
// # Safety
// `path` is a NUL-terminated string; `out` is valid for writes.
enum D2dStatus d2d_scenario_load(const char *path, struct D2dScenario **out);

// Replaces the scenario's seed.
//
// # Safety
// `scenario` is a live handle.
enum D2dStatus d2d_scenario_set_seed(struct D2dScenario *scenario, uint64_t seed);

// Replaces the number of TTIs to simulate.
//
// # Safety
// `scenario` is a live handle.
enum D2dStatus d2d_scenario_set_tti_count(struct D2dScenario *scenario, uint64_t tti_count);

// Releases a scenario. Null is ignored.
//
// # Safety
// `scenario` is null or a live handle, not used afterwards.
void d2d_scenario_free(struct D2dScenario *scenario);

// Runs the scenario. On success `*out` receives a report to release with
// [`d2d_report_free`].
//
// # Safety
// `scenario` is a live handle; `out` is valid for writes.
enum D2dStatus d2d_run(const struct D2dScenario *scenario, struct D2dReport **out);

// Runs the scenario with every peered pair pinned to `mode`, a
// [`D2dMode`] value.
//
// # Safety
// `scenario` is a live handle; `out` is valid for writes.
enum D2dStatus d2d_run_forced(const struct D2dScenario *scenario,
                              uint32_t mode,
                              struct D2dReport **out);

// Copies the run-wide counters of `report` into `*out`.
//
// # Safety
// `report` is a live handle; `out` is valid for writes.
enum D2dStatus d2d_report_summary(const struct D2dReport *report, struct D2dSummary *out);

// Number of flow legs in the report.
//
// # Safety
// `report` is a live handle; `out` is valid for writes.
enum D2dStatus d2d_report_flow_count(const struct D2dReport *report, size_t *out);

// Writes the report's CSV files into `dir`, creating it if needed.
//
// # Safety
// `report` is a live handle; `dir` is a NUL-terminated string.
enum D2dStatus d2d_report_write(const struct D2dReport *report, const char *dir);

// Releases a report. Null is ignored.
//
// # Safety
// `report` is null or a live handle, not used afterwards.
void d2d_report_free(struct D2dReport *report);

// The BestCqi rule: DM when the sidelink CQI is at least the uplink CQI.
// Both CQIs must lie in 0..=15.
//
// # Safety
// `out` is valid for writes.
enum D2dStatus d2d_best_cqi_decide(uint8_t ul_cqi, uint8_t sl_cqi, enum D2dMode *out);

// Transport block size in bits for `num_rbs` RBs at `cqi` under the built-in
// CQI table.
//
// # Safety
// `out` is valid for writes.
enum D2dStatus d2d_amc_tbs(uint8_t cqi, uint32_t num_rbs, uint32_t rb_capacity_re, uint32_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* D2DSIM_H */
