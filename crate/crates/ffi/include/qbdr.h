#ifndef QBDR_H
#define QBDR_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result of every call. Values 2 to 4 match the CLI exit codes.
 */
typedef enum QbdrStatus {
  QBDR_STATUS_OK = 0,
  /*
   A required pointer argument was null.
   */
  QBDR_STATUS_NULL_POINTER = 1,
  /*
   Malformed JSON, invalid model or invalid argument.
   */
  QBDR_STATUS_PARSE = 2,
  /*
   A numerical procedure failed.
   */
  QBDR_STATUS_NUMERICAL = 3,
  /*
   The quantity is undefined for this model.
   */
  QBDR_STATUS_PRECONDITION = 4,
  /*
   The output buffer is shorter than required.
   */
  QBDR_STATUS_BUFFER_TOO_SMALL = 5,
  /*
   Internal panic caught at the boundary.
   */
  QBDR_STATUS_INTERNAL = 6,
} QbdrStatus;

/*
 Opaque model handle.
 */
typedef struct QbdrModel QbdrModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Parse a model from a NUL-terminated JSON document. On success `*out`
 receives a new handle.

 # Safety
 `json` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum QbdrStatus qbdr_model_from_json(const char *json, struct QbdrModel **out);

/*
 Release a handle. Null is ignored.

 # Safety
 `model` must be null or a handle not yet freed.
 */
void qbdr_model_free(struct QbdrModel *model);

/*
 Phase count and top level of a model.

 # Safety
 All pointers must be valid.
 */
enum QbdrStatus qbdr_model_dims(const struct QbdrModel *model, size_t *phases, size_t *capacity);

/*
 Stationary distribution, `(C+1) n` values ordered by level then phase.

 # Safety
 `out` must point to `len` writable doubles.
 */
enum QbdrStatus qbdr_stationary(const struct QbdrModel *model, double *out, size_t len);

/*
 Full deviation matrix, `((C+1) n)^2` values.

 # Safety
 `out` must point to `len` writable doubles.
 */
enum QbdrStatus qbdr_deviation(const struct QbdrModel *model, double *out, size_t len);

/*
 Deviation block `D_{k,l}`, `n^2` values.

 # Safety
 `out` must point to `len` writable doubles.
 */
enum QbdrStatus qbdr_deviation_block(const struct QbdrModel *model,
                                     size_t k,
                                     size_t l,
                                     double *out,
                                     size_t len);

/*
 Mean first passage times to `(level, phase)` from every state,
 `(C+1) n` values.

 # Safety
 `out` must point to `len` writable doubles.
 */
enum QbdrStatus qbdr_passage(const struct QbdrModel *model,
                             size_t level,
                             size_t phase,
                             double *out,
                             size_t len);

/*
 Expected cumulative reward `R_k(t)` for every level and starting phase,
 using the model's reward section; `(C+1) n` values.

 # Safety
 `out` must point to `len` writable doubles.
 */
enum QbdrStatus qbdr_reward_time(const struct QbdrModel *model, double t, double *out, size_t len);

/*
 Message for the last failure on this thread, or null after a success.
 The pointer stays valid until the next call on the same thread.
 */
const char *qbdr_last_error(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QBDR_H */
