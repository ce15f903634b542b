/** Status gates, mirroring the server exactly: layout review unlocks at
 * status 2, OCR/output review at status 4. The server's response flags win
 * when present; these exist for rendering before a response arrives and for
 * tests. */

export const LAYOUT_VIEW_MIN_STATUS = 2;
export const OCR_VIEW_MIN_STATUS = 4;

export function canViewLayout(status: number): boolean {
  return status >= LAYOUT_VIEW_MIN_STATUS;
}

export function canViewOcr(status: number): boolean {
  return status >= OCR_VIEW_MIN_STATUS;
}

export const STATUS_NAMES: Record<number, string> = {
  1: "Uploaded",
  2: "Layout detected",
  3: "Layout reviewed",
  4: "Processed",
  5: "Outputs reviewed",
};
