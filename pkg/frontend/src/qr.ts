// Join-code display: the payload rendered as a scannable QR image.

import QRCode from "qrcode";

export function joinCodeSvg(payload: string): Promise<string> {
  return QRCode.toString(payload, { type: "svg", errorCorrectionLevel: "M" });
}

export function joinCodeDataUrl(payload: string): Promise<string> {
  return QRCode.toDataURL(payload, { errorCorrectionLevel: "M", scale: 6 });
}
