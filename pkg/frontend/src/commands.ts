// Single dispatch point for reviewer actions.  Buttons and keyboard
// shortcuts both route through runCommand, so the two input paths cannot
// drift apart in what they send to the service.

import { DecisionOutcome, ReviewSession } from "./session.js";

export type Command = "accept" | "reject" | "undo" | "skip";

export const KEY_BINDINGS: Record<string, Command> = {
  a: "accept",
  r: "reject",
  u: "undo",
  n: "skip",
};

export async function runCommand(
  session: ReviewSession,
  cmd: Command,
): Promise<DecisionOutcome | null> {
  switch (cmd) {
    case "accept":
      return session.accept();
    case "reject":
      return session.reject();
    case "undo":
      session.editor.undo();
      return null;
    case "skip":
      await session.next();
      return null;
  }
}
