"""dynqubo: dynamic optimization problems compiled to QUBO and solved.

The pipeline: a polynomial dynamic optimization problem (`model`) is reduced
to an input-only box problem by state elimination, binarized, and assembled
into a QUBO (`transform`); classical engines (`solvers`), a virtual
quantum-annealer path with minor embedding (`embedding`), and a hybrid
decomposition loop (`hybrid`) solve it; `harness` sweeps solver grids and
scores everything against the continuous baseline.
"""

from .errors import (
    DegreeTooHighError,
    DynQuboError,
    EmbeddingNotFoundError,
    InvalidEmbeddingError,
    LengthMismatchError,
    MissingSchemeError,
    NonExplicitDynamicsError,
    NotMultilinearError,
    SelfReferenceError,
    ShapeMismatchError,
    TooLargeError,
    UnboundVariableError,
)
from .polyalg import (
    Monomial,
    Namespace,
    Polynomial,
    VarId,
    aux_var,
    binary_var,
    evaluate_batch,
    input_var,
    state_var,
)
from .model import (
    DynamicOptProblem,
    PolynomialODE,
    ReactorParams,
    Trajectory,
    cstr_ode,
    cstr_problem,
    euler_discretize,
    load_preset,
    load_problem_file,
    simulate,
)
from .transform import (
    BinarizationScheme,
    BoxProblem,
    CompiledProblem,
    Qubo,
    assemble_qubo,
    binarize,
    compile_problem,
    eliminate_states,
    quadratize,
    read_qubo,
    write_qubo,
)
from .solvers import (
    PgdResult,
    Sample,
    SampleSet,
    SaSchedule,
    TabuConfig,
    brute_force,
    decode,
    projected_gradient,
    simulated_annealing,
    tabu_search,
)
from .embedding import (
    Embedding,
    EmbeddingReport,
    HardwareGraph,
    default_chain_strength,
    dominance_chain_strength,
    embed_qubo,
    find_embedding,
    grid,
    pegasus,
    unembed,
    validate_embedding,
    virtual_qpu_solve,
)
from .hybrid import (
    BranchResult,
    HybridConfig,
    compose,
    energy_impact_decompose,
    kerberos_run,
)
from .harness import (
    ExperimentConfig,
    Report,
    SolverSpec,
    error_per_timestep,
    gap_at_time,
    report_export,
    sweep,
)

__version__ = "0.1.0"
