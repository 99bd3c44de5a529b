#ifndef QBSPDE_H
#define QBSPDE_H

#include <stddef.h>
#include <stdint.h>

/*
 Result code of every call.
 */
typedef enum QbsStatus {
  QBS_STATUS_OK = 0,
  QBS_STATUS_NULL_POINTER = 1,
  QBS_STATUS_INVALID_ARGUMENT = 2,
  QBS_STATUS_UNKNOWN_PRESET = 3,
  QBS_STATUS_NUMERICAL = 4,
  QBS_STATUS_IO = 5,
  QBS_STATUS_BUFFER_TOO_SMALL = 6,
  QBS_STATUS_PANIC = 7,
} QbsStatus;

/*
 A problem definition plus its default grid.
 */
typedef struct QbsProblem QbsProblem;

/*
 A solved field.
 */
typedef struct QbsSolution QbsSolution;

/*
 Grid and solver overrides; zero fields keep the problem defaults.
 */
typedef struct QbsSolveOptions {
  size_t nx;
  size_t nt;
  size_t nw;
  double w_max;
  double theta;
  double picard_tol;
} QbsSolveOptions;

/*
 Shape of a solution: `u` holds `n_levels * n_space * n_w` values,
 `q` holds that times `d0`.
 */
typedef struct QbsDims {
  size_t dim;
  size_t n_levels;
  size_t n_space;
  size_t n_w;
  size_t d0;
} QbsDims;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failure on this thread. Valid until the next failing call.
 */
const char *qbs_last_error(void);

/*
 Library version as a static string.
 */
const char *qbs_version(void);

/*
 Load a shipped preset by name.

 # Safety
 `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum QbsStatus qbs_problem_from_preset(const char *name, struct QbsProblem **out);

/*
 Build a problem from a JSON document.

 # Safety
 `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum QbsStatus qbs_problem_from_json(const char *json, struct QbsProblem **out);

/*
 Release a problem. Null is ignored.

 # Safety
 `p` must come from a `qbs_problem_from_*` call and not be used afterwards.
 */
void qbs_problem_free(struct QbsProblem *p);

/*
 Solve a problem. `options` may be null.

 # Safety
 `problem` must be a live handle, `options` null or valid, `out` valid.
 */
enum QbsStatus qbs_solve(const struct QbsProblem *problem,
                         const struct QbsSolveOptions *options,
                         struct QbsSolution **out);

/*
 Release a solution. Null is ignored.

 # Safety
 `s` must come from [`qbs_solve`] and not be used afterwards.
 */
void qbs_solution_free(struct QbsSolution *s);

/*
 Shape of a solution.

 # Safety
 Both pointers must be valid.
 */
enum QbsStatus qbs_solution_dims(const struct QbsSolution *s, struct QbsDims *out);

/*
 Copy `u` (level-major, then space, then noise) into `buf`.

 # Safety
 `buf` must hold `len` doubles.
 */
enum QbsStatus qbs_solution_copy_u(const struct QbsSolution *s, double *buf, size_t len);

/*
 Copy `q` (same order as `u`, `d0` components innermost) into `buf`.

 # Safety
 `buf` must hold `len` doubles.
 */
enum QbsStatus qbs_solution_copy_q(const struct QbsSolution *s, double *buf, size_t len);

/*
 Write a solution; the format follows the extension (`.csv` or `.bin`).

 # Safety
 `path` must be a NUL-terminated string.
 */
enum QbsStatus qbs_solution_write(const struct QbsSolution *s, const char *path);

/*
 Coercivity constant `kappa / (1 + 2K)`.

 # Safety
 `out` must be valid.
 */
enum QbsStatus qbs_mu0(double kappa, double k, double *out);

/*
 A priori sup bound at time `t`.

 # Safety
 `out` must be valid.
 */
enum QbsStatus qbs_linf_bound(double t,
                              double lambda0_sup,
                              double lambda1,
                              double phi_sup,
                              double horizon,
                              double *out);

/*
 Undo the exponential change of variables on `n` scalar pairs.

 # Safety
 All four buffers must hold `n` doubles.
 */
enum QbsStatus qbs_exp_inverse(const double *v,
                               const double *r,
                               size_t n,
                               double lambda,
                               double *u_out,
                               double *q_out);

/*
 Search for uniqueness transform parameters. On a failed search the best
 margin is still written and the status is `Numerical`.

 # Safety
 Output pointers must be valid.
 */
enum QbsStatus qbs_choose_beta_b(double mu0,
                                 double big_lambda,
                                 double m,
                                 double *beta,
                                 double *b,
                                 double *margin);

/*
 Run a CLI subcommand described by JSON, e.g.
 `{"command": "estimate", "config": {"check": "linf"}}`, and return the
 report as a string to be released with [`qbs_string_free`].

 # Safety
 `request` must be a NUL-terminated string and `out` valid.
 */
enum QbsStatus qbs_run_json(const char *request, char **out);

/*
 Release a string returned by this library. Null is ignored.

 # Safety
 `s` must come from this library and not be used afterwards.
 */
void qbs_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QBSPDE_H */
