#ifndef VALUEID_H
#define VALUEID_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ValueidStatus {
  VALUEID_STATUS_OK = 0,
  VALUEID_STATUS_NULL_ARGUMENT = 1,
  VALUEID_STATUS_INVALID_UTF8 = 2,
  /**
   * Input well-formed but unusable (length mismatch, empty input, ...).
   */
  VALUEID_STATUS_DATA = 3,
  /**
   * A file could not be read or parsed.
   */
  VALUEID_STATUS_FORMAT = 4,
  VALUEID_STATUS_INVARIANT = 5,
  VALUEID_STATUS_OUT_OF_RANGE = 6,
  VALUEID_STATUS_PANIC = 7,
} ValueidStatus;

typedef enum ValueidDiagnosisKind {
  VALUEID_DIAGNOSIS_KIND_VALID = 0,
  VALUEID_DIAGNOSIS_KIND_OVER = 1,
  VALUEID_DIAGNOSIS_KIND_UNDER = 2,
  VALUEID_DIAGNOSIS_KIND_NON_INTEGER = 3,
  VALUEID_DIAGNOSIS_KIND_NEGATIVE = 4,
} ValueidDiagnosisKind;

/**
 * Trained zero/one/other classifier.
 */
typedef struct ValueidClassifier ValueidClassifier;

/**
 * Linear constraint over non-negative counts.
 */
typedef struct ValueidConstraint ValueidConstraint;

/**
 * Trained value identifier.
 */
typedef struct ValueidIdentifier ValueidIdentifier;

/**
 * Masked response text.
 */
typedef struct ValueidMasked ValueidMasked;

/**
 * Result of checking values against a constraint. `amount` is set for
 * Over/Under; `first_slot` (0-based) for NonInteger/Negative.
 */
typedef struct ValueidDiagnosis {
  enum ValueidDiagnosisKind kind;
  int64_t amount_num;
  int64_t amount_den;
  size_t first_slot;
} ValueidDiagnosis;

typedef struct ValueidKappa {
  double kappa;
  double p_o;
  double p_e;
  /**
   * Chance agreement was 1; `kappa` then follows the 1/0 convention.
   */
  bool degenerate;
} ValueidKappa;

/**
 * Result of value identification for one slot.
 */
typedef struct ValueidChoice {
  /**
   * False when the response holds no numbers; other fields are then zero.
   */
  bool found;
  size_t placeholder_index;
  int64_t value_num;
  int64_t value_den;
  double score;
} ValueidChoice;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *valueid_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *valueid_version(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void valueid_string_free(char *s);

/**
 * Parses space-separated number words ("sixty four") into a value.
 *
 * # Safety
 * `words` must be a NUL-terminated string; `num` and `den` writable.
 */
enum ValueidStatus valueid_parse_written(const char *words, int64_t *num, int64_t *den);

/**
 * Masks every number in `text`.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` writable.
 */
enum ValueidStatus valueid_mask_text(const char *text, struct ValueidMasked **out);

/**
 * Number of placeholders; 0 for a null handle.
 *
 * # Safety
 * `masked` must be null or a live handle.
 */
size_t valueid_masked_len(const struct ValueidMasked *masked);

/**
 * Value of placeholder `index`.
 *
 * # Safety
 * `masked` must be a live handle; `num` and `den` writable.
 */
enum ValueidStatus valueid_masked_value(const struct ValueidMasked *masked,
                                        size_t index,
                                        int64_t *num,
                                        int64_t *den);

/**
 * Masked template as a new string; free it with `valueid_string_free`.
 *
 * # Safety
 * `masked` must be a live handle and `out` writable.
 */
enum ValueidStatus valueid_masked_template(const struct ValueidMasked *masked, char **out);

/**
 * Original text with every placeholder restored; free with `valueid_string_free`.
 *
 * # Safety
 * `masked` must be a live handle and `out` writable.
 */
enum ValueidStatus valueid_masked_unmask(const struct ValueidMasked *masked, char **out);

/**
 * # Safety
 * `masked` must be null or a live handle; it is invalid afterwards.
 */
void valueid_masked_free(struct ValueidMasked *masked);

/**
 * Constraint `sum(coefficients[i] * x[i]) == total` with integer terms.
 *
 * # Safety
 * `coefficients` must point to `len` values and `out` be writable.
 */
enum ValueidStatus valueid_constraint_new(const int64_t *coefficients,
                                          size_t len,
                                          int64_t total,
                                          struct ValueidConstraint **out);

/**
 * Checks `len` values given as numerator/denominator arrays.
 *
 * # Safety
 * `constraint` must be a live handle, `num` and `den` point to `len`
 * values, and `out` be writable.
 */
enum ValueidStatus valueid_constraint_check(const struct ValueidConstraint *constraint,
                                            const int64_t *num,
                                            const int64_t *den,
                                            size_t len,
                                            struct ValueidDiagnosis *out);

/**
 * Number of non-negative integer solutions.
 *
 * # Safety
 * `constraint` must be a live handle and `count` writable.
 */
enum ValueidStatus valueid_constraint_count_solutions(const struct ValueidConstraint *constraint,
                                                      size_t *count);

/**
 * # Safety
 * `constraint` must be null or a live handle; it is invalid afterwards.
 */
void valueid_constraint_free(struct ValueidConstraint *constraint);

/**
 * Cohen's kappa between two label sequences of length `len`.
 *
 * # Safety
 * `a` and `b` must point to `len` labels and `out` be writable.
 */
enum ValueidStatus valueid_cohen_kappa(const int32_t *a,
                                       const int32_t *b,
                                       size_t len,
                                       struct ValueidKappa *out);

/**
 * Loads a classifier saved by `valueid train-classifier`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum ValueidStatus valueid_classifier_load(const char *path, struct ValueidClassifier **out);

/**
 * Posterior of zero, one and other for one slot, written to `probs[0..3]`.
 *
 * # Safety
 * `model` must be a live handle, the strings NUL-terminated and `probs`
 * point to three writable doubles.
 */
enum ValueidStatus valueid_classifier_predict(const struct ValueidClassifier *model,
                                              const char *slot_question,
                                              const char *response,
                                              double *probs);

/**
 * # Safety
 * `model` must be null or a live handle; it is invalid afterwards.
 */
void valueid_classifier_free(struct ValueidClassifier *model);

/**
 * Loads an identifier saved by `valueid train-identifier`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum ValueidStatus valueid_identifier_load(const char *path, struct ValueidIdentifier **out);

/**
 * Scores the numbers of `response` for one slot and picks the best.
 *
 * # Safety
 * `model` must be a live handle, the strings NUL-terminated and `out`
 * writable.
 */
enum ValueidStatus valueid_identifier_select(const struct ValueidIdentifier *model,
                                             const char *slot_question,
                                             const char *response,
                                             struct ValueidChoice *out);

/**
 * # Safety
 * `model` must be null or a live handle; it is invalid afterwards.
 */
void valueid_identifier_free(struct ValueidIdentifier *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VALUEID_H */
