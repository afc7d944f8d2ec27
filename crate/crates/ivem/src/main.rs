//! Command-line driver: convergence studies, single solves, the small-cut
//! preconditioner study, verification suites, and mesh export.

use clap::{Parser, Subcommand};

use ivem::bench::{
    benchmark_by_name, dof_interpolation_error, precond_csv, run_case, run_convergence,
    run_precond_study, ProblemKind,
};
use ivem::config::Config;
use ivem::derham::verify_complex;
use ivem::geo::tet_volume;
use ivem::mesh::{
    build_background_mesh, build_topology, classify_and_cut, export_mesh_vtk, plane_x, sphere,
    CutMeshTopology, LevelSet,
};
use ivem::geo::Vec3;
use ivem::ifespace::{Coefficients, JumpKind, NodalIfe};
use ivem::projection::{project_curl, project_h1_gradient, ElemCtx, LocalDofs};
use ivem::solver::Csr;
use ivem::{IvemError, Result};

#[derive(Parser)]
#[command(
    name = "ivem",
    about = "Immersed virtual element method for 3D H1 and H(curl) interface problems"
)]
struct Cli {
    /// Optional `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<String>,
    /// Override a config entry, e.g. `--set rel_tol=1e-8` (repeatable).
    #[arg(long = "set", global = true)]
    set: Vec<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Refinement study of a benchmark; emits CSV rows plus a slope line.
    Converge {
        #[arg(long)]
        problem: String,
        /// Comma-separated subdivision counts, e.g. 8,16,24.
        #[arg(long, value_delimiter = ',')]
        nlist: Vec<usize>,
        /// CSV output path (stdout if omitted).
        #[arg(long)]
        out: Option<String>,
    },
    /// Solve one benchmark level and report its errors.
    Solve {
        #[arg(long)]
        problem: String,
        #[arg(long)]
        n: usize,
        /// Write the reduced system as MatrixMarket `<prefix>.mtx` /
        /// `<prefix>_rhs.mtx`.
        #[arg(long)]
        dump_system: Option<String>,
        /// Write the iteration log as `iter,residual` CSV.
        #[arg(long)]
        log: Option<String>,
    },
    /// Small-cut robustness study on the flat H(curl) interface family.
    Precond {
        /// Interface locations `x1 = 5e-2 * 10^{-r}`.
        #[arg(long, value_delimiter = ',')]
        rlist: Vec<usize>,
        /// HX block-expansion widths.
        #[arg(long, value_delimiter = ',')]
        llist: Vec<usize>,
        #[arg(long, default_value_t = 12)]
        n: usize,
        #[arg(long)]
        out: Option<String>,
    },
    /// Run the verification suites (de Rham complex, patch tests, geometry).
    Verify,
    /// Export the cut mesh of a benchmark geometry as legacy ASCII VTK.
    ExportMesh {
        #[arg(long, default_value = "h1-sphere")]
        problem: String,
        #[arg(long, default_value_t = 8)]
        n: usize,
        #[arg(long)]
        vtk: String,
    },
}

fn main() {
    let cli = Cli::parse();
    std::process::exit(run(cli));
}

fn run(cli: Cli) -> i32 {
    let cfg = match build_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    match dispatch(cli.cmd, &cfg) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                IvemError::InvalidInput(_) | IvemError::Io(_) => 2,
                _ => 3,
            }
        }
    }
}

fn build_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(path) => Config::from_file(path)?,
        None => Config::default(),
    };
    for kv in &cli.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| {
            IvemError::InvalidInput(format!("--set expects key=value, got `{kv}`"))
        })?;
        cfg.set(k.trim(), v.trim())?;
    }
    Ok(cfg)
}

fn write_or_print(out: &Option<String>, text: &str) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, text)?;
            eprintln!("wrote {path}");
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn dispatch(cmd: Cmd, cfg: &Config) -> Result<i32> {
    match cmd {
        Cmd::Converge { problem, nlist, out } => {
            if nlist.is_empty() {
                return Err(IvemError::InvalidInput("--nlist must not be empty".into()));
            }
            let bench = benchmark_by_name(&problem)?;
            let table = run_convergence(&bench, &nlist, cfg)?;
            write_or_print(&out, &table.to_csv())?;
            Ok(0)
        }
        Cmd::Solve { problem, n, dump_system, log } => {
            let bench = benchmark_by_name(&problem)?;
            let (report, res) = run_case(&bench, n, cfg)?;
            if let Some(path) = log {
                let mut text = String::from("iter,residual\n");
                for (i, r) in res.residual_log.iter().enumerate() {
                    text.push_str(&format!("{},{r:.6e}\n", i + 1));
                }
                std::fs::write(&path, text)?;
                eprintln!("wrote {path}");
            }
            if let Some(prefix) = dump_system {
                let (aff, bf) = res.sys.reduced();
                aff.write_matrix_market(&format!("{prefix}.mtx"))?;
                let trips: Vec<(usize, usize, f64)> =
                    bf.iter().enumerate().map(|(i, &v)| (i, 0, v)).collect();
                Csr::from_triplets(bf.len(), 1, &trips)
                    .write_matrix_market(&format!("{prefix}_rhs.mtx"))?;
                eprintln!("wrote {prefix}.mtx and {prefix}_rhs.mtx");
            }
            println!("n,h,dof_total,dof_interface,err_L2,err_Linf,err_energy,iters,seconds");
            println!("{}", report.csv_row());
            Ok(0)
        }
        Cmd::Precond { rlist, llist, n, out } => {
            if rlist.is_empty() || llist.is_empty() {
                return Err(IvemError::InvalidInput(
                    "--rlist and --llist must not be empty".into(),
                ));
            }
            let records = run_precond_study(&rlist, &llist, n, cfg)?;
            write_or_print(&out, &precond_csv(&records))?;
            Ok(0)
        }
        Cmd::Verify => verify(cfg),
        Cmd::ExportMesh { problem, n, vtk } => {
            let bench = benchmark_by_name(&problem)?;
            let mesh = build_background_mesh(n, bench.domain)?;
            let cm = classify_and_cut(mesh, &bench.level_set, cfg.snap_tol)?;
            let topo = build_topology(cm)?;
            export_mesh_vtk(&topo, &vtk)?;
            eprintln!("wrote {vtk}");
            Ok(0)
        }
    }
}

fn cut_topology(n: usize, domain: ivem::geo::Box3, ls: &LevelSet, cfg: &Config) -> Result<CutMeshTopology> {
    let mesh = build_background_mesh(n, domain)?;
    let cm = classify_and_cut(mesh, ls, cfg.snap_tol)?;
    build_topology(cm)
}

/// Run the verification suites; prints one PASS/FAIL line per check and
/// returns exit code 4 on any failure.
fn verify(cfg: &Config) -> Result<i32> {
    let mut ok = true;
    let mut check = |name: &str, pass: bool, detail: String| {
        println!("{}: {name}{}", if pass { "PASS" } else { "FAIL" }, detail);
        ok &= pass;
    };

    // Discrete de Rham complex: exact ranks, zero compositions, commuting
    // interpolations (cut and uncut meshes).
    let cube = ivem::geo::Box3::cube(-1.0, 1.0);
    for (label, ls) in [
        ("uncut", plane_x(1.5)),
        ("flat-cut", plane_x(0.05)),
        ("sphere-cut", sphere(std::f64::consts::PI / 5.0)),
    ] {
        for n in [2usize, 4] {
            let topo = cut_topology(n, cube, &ls, cfg)?;
            let rep = verify_complex(&topo, 5000);
            let res =
                rep.res_commute_grad.max(rep.res_commute_curl).max(rep.res_commute_div);
            check(
                &format!("de Rham complex ({label}, n={n})"),
                rep.ranks_are_exact() && rep.composition_residual == 0.0 && res <= 1e-10,
                format!(" (max commuting residual {res:.2e})"),
            );
        }
    }

    // Flat-interface patch tests.
    let mut direct = cfg.clone();
    direct.precond = "direct".into();
    for name in ["h1-flat", "hcurl-flat"] {
        let bench = benchmark_by_name(name)?;
        let (report, res) = run_case(&bench, 8, &direct)?;
        let dof_err = dof_interpolation_error(&bench, &res.topo, &res.x);
        let worst = report
            .err_l2
            .max(report.err_energy)
            .max(dof_err)
            .max(if bench.kind() == ProblemKind::H1 { report.err_linf } else { 0.0 });
        check(&format!("patch test ({name}, n=8)"), worst <= 1e-8, format!(" (max error {worst:.2e})"));
    }

    // Projection reproduction on a planar cut: a nodal IFE function is
    // recovered from its DoFs and a rotation field from its edge moments.
    {
        let coeff = Coefficients {
            alpha_minus: 1.0,
            alpha_plus: 100.0,
            beta_minus: 1.0,
            beta_plus: 200.0,
        };
        let topo = cut_topology(4, cube, &plane_x(0.05), cfg)?;
        let mut worst = 0.0f64;
        for k in (0..topo.n_elems()).filter(|&k| topo.is_interface(k)) {
            let ctx = ElemCtx::interface(&topo, k, &coeff)?;
            let chain = ctx.chain(JumpKind::Edge, &ctx.beta);
            let v = NodalIfe::new(
                chain.extend(&Vec3::new(0.7, -1.3, 0.4)),
                0.21,
                ctx.anchors.clone(),
            );
            let region_of =
                |x: &Vec3| usize::from((x - ctx.anchors[0]).dot(&ctx.normals[0]) > 0.0);
            let dofs: Vec<f64> =
                ctx.coords.iter().map(|x| v.eval(x, region_of(x))).collect();
            let proj = project_h1_gradient(&ctx, &ctx.beta.clone(), &dofs)?;
            for m in 0..ctx.n_regions() {
                worst = worst.max((proj[m] - v.b[m]).norm());
            }
            let a = 0.8 * ctx.normals[0];
            let x0 = ctx.anchors[0];
            let edofs = LocalDofs::edge(&ctx, |x| a.cross(&(x - x0)));
            let curl = project_curl(&ctx, &ctx.alpha.clone(), &edofs)?;
            for m in 0..ctx.n_regions() {
                worst = worst.max((curl[m] - 2.0 * a).norm());
            }
        }
        check(
            "projection reproduction (planar cut, n=4)",
            worst <= 1e-10,
            format!(" (worst defect {worst:.2e})"),
        );
    }

    // Geometry partition identities on the benchmark cut meshes.
    for name in ["h1-sphere", "h1-flat", "hcurl-flat-3"] {
        let bench = benchmark_by_name(name)?;
        let topo = cut_topology(8, bench.domain, &bench.level_set, cfg)?;
        let mut worst = 0.0f64;
        for k in 0..topo.n_elems() {
            if !topo.is_interface(k) {
                continue;
            }
            let ctx = ElemCtx::interface(&topo, k, &bench.coeff)?;
            let t = topo.cm.mesh.elems[k];
            let vol = tet_volume(
                &topo.cm.mesh.nodes[t[0]],
                &topo.cm.mesh.nodes[t[1]],
                &topo.cm.mesh.nodes[t[2]],
                &topo.cm.mesh.nodes[t[3]],
            );
            worst = worst.max((ctx.vols.iter().sum::<f64>() - vol).abs() / vol);
        }
        check(
            &format!("volume partition identity ({name}, n=8)"),
            worst <= 1e-12,
            format!(" (worst relative defect {worst:.2e})"),
        );
    }

    Ok(if ok { 0 } else { 4 })
}
