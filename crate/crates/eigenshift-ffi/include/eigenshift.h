/* C interface to the eigenshift toolkit.
 *
 * Kept in lockstep with src/lib.rs by the header_sync test. Every
 * fallible call returns an EsStatus and writes its result through an
 * out-pointer that is only meaningful on ES_OK; es_last_error() then
 * describes the most recent failure on the calling thread. Handles are
 * freed exactly once with their matching es_*_free, which accepts null.
 */

#ifndef EIGENSHIFT_H
#define EIGENSHIFT_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum EsStatus {
  ES_OK = 0,
  ES_NULL_POINTER = 1,
  ES_INVALID_ARGUMENT = 2,
  ES_NOT_FOUND = 3,
  ES_IO = 4,
  ES_DATA = 5,
  ES_CONVERGENCE = 6,
  ES_INTERNAL = 7,
} EsStatus;

/* Dense row-major matrix of doubles. */
typedef struct EsMatrix EsMatrix;

/* Singular value decomposition of a tall matrix. */
typedef struct EsSvd EsSvd;

/* Result of one spectral shift. */
typedef struct EsShift EsShift;

/* Library version as a static NUL-terminated string. */
const char *es_version(void);

/* Message for the most recent failure on this thread, or NULL if the
 * last call succeeded. Valid until the next failing call here. */
const char *es_last_error(void);

/* Creates a matrix from rows*cols doubles, row major. */
EsStatus es_matrix_new(size_t rows, size_t cols, const double *data,
                       EsMatrix **out);

/* Loads a 2-d weight tensor from a checkpoint file. */
EsStatus es_matrix_from_checkpoint(const char *path, const char *tensor,
                                   EsMatrix **out);

void es_matrix_free(EsMatrix *m);

/* Dimensions; 0 on a null handle. */
size_t es_matrix_rows(const EsMatrix *m);
size_t es_matrix_cols(const EsMatrix *m);

/* Copies all entries, row major; len must equal rows*cols. */
EsStatus es_matrix_copy_data(const EsMatrix *m, double *out, size_t len);

/* Decomposes a tall matrix (rows >= cols) into singular factors. */
EsStatus es_svd_compute(const EsMatrix *m, EsSvd **out);

void es_svd_free(EsSvd *s);

/* Number of singular values; 0 on a null handle. */
size_t es_svd_sigma_len(const EsSvd *s);

/* Copies the singular values, descending; len must equal
 * es_svd_sigma_len(s). */
EsStatus es_svd_sigma(const EsSvd *s, double *out, size_t len);

/* Multiplies the factors back into a matrix. */
EsStatus es_svd_reconstruct(const EsSvd *s, EsMatrix **out);

/* Scores every singular direction of w on a labelled activation set
 * (hidden: samples*dim doubles row major; labels: one byte per sample,
 * nonzero = toxic), damps the top_k highest-gap directions by alpha,
 * and rebuilds the weights. sigma_scaled selects the sigma-weighted
 * activation variant. */
EsStatus es_shift_run(const EsMatrix *w, const double *hidden,
                      size_t samples, size_t dim, const uint8_t *labels,
                      double alpha, size_t top_k, int sigma_scaled,
                      EsShift **out);

void es_shift_free(EsShift *s);

/* Copies the edited weight matrix out of a shift result. */
EsStatus es_shift_weights(const EsShift *s, EsMatrix **out);

/* 1 when the weights are bit-identical to the input, else 0. */
int es_shift_identity(const EsShift *s);

/* Frobenius norm of the weight change; NaN on a null handle. */
double es_shift_frobenius_delta(const EsShift *s);

/* Number of damped directions; 0 on a null handle. */
size_t es_shift_target_count(const EsShift *s);

/* Copies the damped direction indices, highest gap first; len must
 * equal es_shift_target_count(s). */
EsStatus es_shift_targets(const EsShift *s, size_t *out, size_t len);

/* Number of per-direction gap scores; 0 on a null handle. */
size_t es_shift_score_count(const EsShift *s);

/* Copies the per-direction gap scores in spectrum order; len must
 * equal es_shift_score_count(s). */
EsStatus es_shift_scores(const EsShift *s, double *out, size_t len);

/* Harmonic mean of toxicity reduction and fluency retention. Total:
 * out-of-range or non-finite input yields 0. */
double es_tph(double toxicity_drop, double perplexity_change);

/* Ranking quality of scores against byte labels (nonzero = positive). */
EsStatus es_auroc(const double *scores, const uint8_t *labels, size_t n,
                  double *out);

/* Area under the precision-recall curve. */
EsStatus es_average_precision(const double *scores, const uint8_t *labels,
                              size_t n, double *out);

#ifdef __cplusplus
}
#endif

#endif /* EIGENSHIFT_H */
