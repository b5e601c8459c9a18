#ifndef MIKADO_H
#define MIKADO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

// Result of a fallible call. Zero is success.
typedef enum MikadoStatus {
  MIKADO_STATUS_OK = 0,
  MIKADO_STATUS_NULL_POINTER = 1,
  MIKADO_STATUS_INVALID_ARGUMENT = 2,
  MIKADO_STATUS_IO = 3,
  MIKADO_STATUS_PARSE = 4,
  MIKADO_STATUS_VALIDATION = 5,
  MIKADO_STATUS_GEOMETRY = 6,
  MIKADO_STATUS_DOMAIN = 7,
  MIKADO_STATUS_DEGENERATE = 8,
  MIKADO_STATUS_PANIC = 9,
} MikadoStatus;

// Detector layout with its field map.
typedef struct MikadoDetector MikadoDetector;

// Hits of one event, optionally with truth.
typedef struct MikadoEvent MikadoEvent;

// Ordered list of finder passes.
typedef struct MikadoSchedule MikadoSchedule;

// Track label for every hit of an event.
typedef struct MikadoSolution MikadoSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null if none failed.
// The string stays valid until the next failing call on this thread.
const char *mikado_last_error(void);

// Static, NUL-terminated name of a status code.
const char *mikado_status_name(enum MikadoStatus status);

// The built-in layout with a uniform 2 T field.
enum MikadoStatus mikado_detector_default(struct MikadoDetector **out);

// Reads a geometry file: CSV layer table, or a TOML layout when the name
// ends in `.toml`.
enum MikadoStatus mikado_detector_load(const char *path, struct MikadoDetector **out);

// Replaces the field map of `detector` with the one in a fields CSV.
enum MikadoStatus mikado_detector_load_fields(struct MikadoDetector *detector, const char *path);

size_t mikado_detector_num_layers(const struct MikadoDetector *detector);

void mikado_detector_free(struct MikadoDetector *detector);

// The shipped pass list for `detector`.
enum MikadoStatus mikado_schedule_default(const struct MikadoDetector *detector,
                                          struct MikadoSchedule **out);

enum MikadoStatus mikado_schedule_load(const char *path, struct MikadoSchedule **out);

size_t mikado_schedule_num_passes(const struct MikadoSchedule *schedule);

void mikado_schedule_free(struct MikadoSchedule *schedule);

// Loads event `event_id` from a directory of `eventNNNNNNNNN-*.csv` files.
// Truth and particle files are read only when `with_truth` is non-zero.
enum MikadoStatus mikado_event_load(const char *dir,
                                    uint64_t event_id,
                                    bool with_truth,
                                    struct MikadoEvent **out);

// Synthetic event with truth. `noiseless` turns off smearing, noise hits
// and holes.
enum MikadoStatus mikado_event_generate(const struct MikadoDetector *detector,
                                        size_t n_primaries,
                                        uint64_t seed,
                                        uint64_t event_id,
                                        bool noiseless,
                                        struct MikadoEvent **out);

// Event without truth built from parallel arrays of length `n`.
enum MikadoStatus mikado_event_from_hits(uint64_t event_id,
                                         size_t n,
                                         const uint64_t *hit_id,
                                         const double *x,
                                         const double *y,
                                         const double *z,
                                         const uint32_t *volume_id,
                                         const uint32_t *layer_id,
                                         const uint32_t *module_id,
                                         struct MikadoEvent **out);

// Writes the event's hits, and truth and particles if present, into `dir`.
enum MikadoStatus mikado_event_write(const struct MikadoEvent *ev, const char *dir);

size_t mikado_event_num_hits(const struct MikadoEvent *ev);

uint64_t mikado_event_id(const struct MikadoEvent *ev);

bool mikado_event_has_truth(const struct MikadoEvent *ev);

void mikado_event_free(struct MikadoEvent *ev);

// Runs every pass of `schedule` over `ev`. `workers` of 0 means one per
// available core. The result does not depend on `workers`.
enum MikadoStatus mikado_reconstruct(const struct MikadoDetector *detector,
                                     const struct MikadoSchedule *schedule,
                                     const struct MikadoEvent *ev,
                                     size_t workers,
                                     struct MikadoSolution **out);

enum MikadoStatus mikado_solution_read(const char *path, struct MikadoSolution **out);

// Writes the solution CSV (`event_id,hit_id,track_id`) to `path`.
enum MikadoStatus mikado_solution_write(const struct MikadoSolution *sol, const char *path);

// Number of hits labelled, including unassigned ones (track 0).
size_t mikado_solution_len(const struct MikadoSolution *sol);

// Number of distinct non-zero track ids.
size_t mikado_solution_num_tracks(const struct MikadoSolution *sol);

// Track of `hit_id`; 0 when the hit is unassigned or unknown.
uint64_t mikado_solution_track_of(const struct MikadoSolution *sol, uint64_t hit_id);

// Copies up to `capacity` (hit id, track id) pairs in hit id order and
// stores how many were copied in `written`.
enum MikadoStatus mikado_solution_copy(const struct MikadoSolution *sol,
                                       uint64_t *hit_ids,
                                       uint64_t *track_ids,
                                       size_t capacity,
                                       size_t *written);

void mikado_solution_free(struct MikadoSolution *sol);

// Weighted accuracy of `sol` against the truth of `ev`.
enum MikadoStatus mikado_accuracy_score(const struct MikadoEvent *ev,
                                        const struct MikadoSolution *sol,
                                        bool double_majority,
                                        double *out);

// Fraction of reconstructable primaries with a majority track.
enum MikadoStatus mikado_particle_efficiency(const struct MikadoEvent *ev,
                                             const struct MikadoSolution *sol,
                                             double *out);

// Combined score for accuracy `accuracy` at `seconds_per_event`.
enum MikadoStatus mikado_throughput_score(double accuracy, double seconds_per_event, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MIKADO_H */
