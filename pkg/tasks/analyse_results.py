import os
import sys
import argparse
import glob

import pandas as pd
from prettytable import PrettyTable
from tqdm import tqdm

# Calculate project root directory
project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, os.path.join(project_root, "src"))

from ddkf.errors import DDKFError  # noqa: E402
from ddkf.io import read_json, validate_result  # noqa: E402

# Define output directory for analysis results
analysis_output_dir = os.path.join(project_root, "experiments", "analysis_results")


def load_campaign(folder_path):
    """
    Loads the per-run table of one benchmark output folder.

    Args:
        folder_path (str): Folder holding result.json written by ``main.py benchmark``.

    Returns:
        pandas.DataFrame or None: Run rows tagged with the folder name, None if unreadable.
    """
    folder_name = os.path.basename(folder_path)
    result_files = glob.glob(os.path.join(folder_path, "result.json"))
    if not result_files:
        print(f"No result.json found in {folder_name}")
        return None
    try:
        payload = validate_result(read_json(result_files[0]))
    except DDKFError as e:
        print(f"Error processing {folder_name}: {e}")
        return None
    runs = pd.DataFrame(payload["runs"])
    runs["campaign"] = folder_name
    runs["master_seed"] = payload["provenance"]["master_seed"]
    return runs


def aggregate_results(local_folders, index):
    """
    Aggregates one performance index over all campaigns.

    Args:
        local_folders (list): Benchmark output folders.
        index (str): Column of the run table, e.g. ``prediction_rmse_k20``.

    Returns:
        tuple: (per-method summary DataFrame, per-campaign win rates DataFrame)
    """
    frames = []
    for folder_path in tqdm(local_folders):
        runs = load_campaign(folder_path)
        if runs is not None:
            frames.append(runs)
    if not frames:
        return None, None
    runs = pd.concat(frames, ignore_index=True)
    if index not in runs.columns:
        raise KeyError(f"index {index!r} not in run tables; available: {sorted(runs.columns)}")

    ok = runs[runs["status"] == "ok"]
    grouped = ok.groupby("method")[index]
    summary = pd.DataFrame({
        "median": grouped.median(),
        "iqr": grouped.quantile(0.75) - grouped.quantile(0.25),
        "runs": grouped.count(),
        "failures": runs[runs["status"] != "ok"].groupby("method").size(),
    }).fillna({"failures": 0})

    win_rates = []
    for campaign, group in ok.groupby("campaign"):
        pivot = group.pivot(index="run", columns="method", values=index)
        if "unfiltered-smm" not in pivot.columns:
            continue
        row = {"campaign": campaign}
        for method in pivot.columns.drop("unfiltered-smm"):
            paired = pivot[[method, "unfiltered-smm"]].dropna()
            if not paired.empty:
                row[method] = float((paired[method] < paired["unfiltered-smm"]).mean())
        win_rates.append(row)
    return summary, pd.DataFrame(win_rates)


def get_immediate_subdirectories(a_dir):
    # Ensure a_dir is relative to project root if not absolute
    if not os.path.isabs(a_dir):
        a_dir = os.path.join(project_root, a_dir)
    return [os.path.join(a_dir, name) for name in sorted(os.listdir(a_dir))
            if os.path.isdir(os.path.join(a_dir, name))]


# --- Main Execution ---
if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument('--local_dir', default="experiments", type=str,
                        help='Directory containing benchmark output folders (relative to project root)')
    parser.add_argument('--index', default="prediction_rmse_k20", type=str, help='Performance index to summarise')
    args = parser.parse_args()

    folders = get_immediate_subdirectories(args.local_dir)
    folders = [f for f in folders if os.path.exists(os.path.join(f, "result.json"))]
    if not folders:
        print("No benchmark folders found. Exiting.")
        sys.exit(0)

    summary, win_rates = aggregate_results(folders, args.index)
    if summary is None:
        print("No readable results. Exiting.")
        sys.exit(0)

    table = PrettyTable(["Method", "Median", "IQR", "Runs", "Failures"])
    for method, row in summary.iterrows():
        table.add_row([method, f"{row['median']:.4g}", f"{row['iqr']:.4g}", int(row['runs']), int(row['failures'])])
    print(table)
    if not win_rates.empty:
        print("Win rates against unfiltered-smm:")
        print(win_rates.to_string(index=False))

    os.makedirs(analysis_output_dir, exist_ok=True)
    results_file_path = os.path.join(analysis_output_dir, f"analyse_results_{args.index}.txt")
    with open(results_file_path, "w") as file:
        file.write(f"Results for {args.index}\n")
        file.write(table.get_string() + "\n")
        if not win_rates.empty:
            file.write(win_rates.to_string(index=False) + "\n")
    summary.to_csv(os.path.join(analysis_output_dir, f"analyse_results_{args.index}.csv"))
    print(f"Results saved to {results_file_path}")
