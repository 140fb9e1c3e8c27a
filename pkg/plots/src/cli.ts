#!/usr/bin/env node
/**
 * Command line entry point.
 *
 *   plots render --kind sweep --in sweep.csv --out sweep.png [--refs oracle_params.csv]
 *
 * Exit codes: 0 on success, 2 for usage or input errors, 1 for anything
 * unexpected.
 */

import { pathToFileURL } from "node:url";

import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { SchemaError } from "./csv.js";
import { FIGURE_KINDS, FigureKind, FigureSpec, renderToFile } from "./figures.js";

class UsageError extends Error {}

export async function runCli(argv: string[]): Promise<number> {
  try {
    await yargs(argv)
      .scriptName("plots")
      .command(
        "render",
        "render one figure from riskql CSV output",
        (b) =>
          b
            .option("kind", {
              choices: FIGURE_KINDS as unknown as FigureKind[],
              demandOption: true,
              describe: "figure kind",
            })
            .option("in", {
              type: "string",
              array: true,
              demandOption: true,
              describe: "input CSV path(s)",
            })
            .option("out", {
              type: "string",
              demandOption: true,
              describe: "output PNG path",
            })
            .option("refs", {
              type: "string",
              describe: "oracle-params CSV for reference lines",
            }),
        (args) => {
          const spec: FigureSpec = {
            kind: args.kind,
            inputs: args.in,
            output: args.out,
            refs: args.refs,
          };
          const result = renderToFile(spec);
          process.stdout.write(`wrote ${spec.output} (${result.width}x${result.height})\n`);
        },
      )
      .demandCommand(1, "expected a subcommand (render)")
      .strict()
      .exitProcess(false)
      .fail((msg, err) => {
        if (err) throw err;
        throw new UsageError(msg);
      })
      .parseAsync();
    return 0;
  } catch (err) {
    if (err instanceof SchemaError || err instanceof UsageError) {
      process.stderr.write(`error: ${err.message}\n`);
      return 2;
    }
    if (err instanceof Error && (err as NodeJS.ErrnoException).code === "ENOENT") {
      process.stderr.write(`error: ${err.message}\n`);
      return 2;
    }
    throw err;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined && import.meta.url === pathToFileURL(process.argv[1]).href;

if (invokedDirectly) {
  runCli(hideBin(process.argv)).then(
    (code) => {
      process.exitCode = code;
    },
    (err) => {
      console.error(err);
      process.exitCode = 1;
    },
  );
}
